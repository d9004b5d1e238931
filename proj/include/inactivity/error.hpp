#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace inactivity {

enum class ErrorCode {
  InvalidArgument,
  MissingColumn,
  ParseError,
  EmptyDataset,
  DimensionMismatch,
  NonPositiveWeight,
  LengthMismatch,
  RankDeficient,
  Unbounded,
  IterationLimit,
  ZeroCensoringSurvival,
  InsufficientEvents,
  TooManyRedraws,
  DegenerateEnsemble,
  NegativeVariance,
  SingularGamma,
  InvalidRegime,
  NoSolution,
  ConfigParse,
  Io,
};

inline std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonPositiveWeight: return "NonPositiveWeight";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::Unbounded: return "Unbounded";
    case ErrorCode::IterationLimit: return "IterationLimit";
    case ErrorCode::ZeroCensoringSurvival: return "ZeroCensoringSurvival";
    case ErrorCode::InsufficientEvents: return "InsufficientEvents";
    case ErrorCode::TooManyRedraws: return "TooManyRedraws";
    case ErrorCode::DegenerateEnsemble: return "DegenerateEnsemble";
    case ErrorCode::NegativeVariance: return "NegativeVariance";
    case ErrorCode::SingularGamma: return "SingularGamma";
    case ErrorCode::InvalidRegime: return "InvalidRegime";
    case ErrorCode::NoSolution: return "NoSolution";
    case ErrorCode::ConfigParse: return "ConfigParse";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// A cell that failed to parse. `row` is the 1-based line number in the
/// source (the header is line 1).
class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::string column, std::string token)
      : Error(ErrorCode::ParseError, "row " + std::to_string(row) + ", column '" + column +
                                         "': cannot parse '" + token + "'"),
        row_(row),
        column_(std::move(column)),
        token_(std::move(token)) {}

  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }
  const std::string& token() const noexcept { return token_; }

 private:
  std::size_t row_;
  std::string column_;
  std::string token_;
};

}  // namespace inactivity
