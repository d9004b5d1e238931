#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "inactivity/error.hpp"

namespace inactivity {

/// One subject: observed time min(T, C), event indicator and covariates
/// (without the intercept, which is added when the design is built).
struct SurvivalRecord {
  double time = 0.0;
  int status = 0;
  std::vector<double> covariates;

  friend bool operator==(const SurvivalRecord&, const SurvivalRecord&) = default;
};

/// Immutable collection of records sharing one covariate layout.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::vector<SurvivalRecord> records, std::vector<std::string> covariate_names)
      : records_(std::move(records)), names_(std::move(covariate_names)) {
    std::set<std::string> seen;
    for (const auto& name : names_) {
      if (name.empty()) throw Error(ErrorCode::InvalidArgument, "covariate names must be nonempty");
      if (!seen.insert(name).second)
        throw Error(ErrorCode::InvalidArgument, "duplicate covariate name '" + name + "'");
    }
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      if (r.covariates.size() != names_.size())
        throw Error(ErrorCode::DimensionMismatch,
                    "record " + std::to_string(i) + " has " + std::to_string(r.covariates.size()) +
                        " covariates, expected " + std::to_string(names_.size()));
      if (!std::isfinite(r.time) || r.time < 0.0)
        throw Error(ErrorCode::InvalidArgument,
                    "record " + std::to_string(i) + " has a negative or non-finite time");
      if (r.status != 0 && r.status != 1)
        throw Error(ErrorCode::InvalidArgument,
                    "record " + std::to_string(i) + " has status outside {0, 1}");
      for (double z : r.covariates)
        if (!std::isfinite(z))
          throw Error(ErrorCode::InvalidArgument,
                      "record " + std::to_string(i) + " has a non-finite covariate");
    }
  }

  const std::vector<SurvivalRecord>& records() const noexcept { return records_; }
  const SurvivalRecord& operator[](std::size_t i) const { return records_[i]; }
  const std::vector<std::string>& covariate_names() const noexcept { return names_; }
  std::size_t n() const noexcept { return records_.size(); }
  std::size_t p() const noexcept { return names_.size(); }
  bool empty() const noexcept { return records_.empty(); }

  std::vector<double> times() const {
    std::vector<double> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.time);
    return out;
  }

  std::vector<std::uint8_t> statuses() const {
    std::vector<std::uint8_t> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(static_cast<std::uint8_t>(r.status));
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::vector<SurvivalRecord> records_;
  std::vector<std::string> names_;
};

struct ModelConfig {
  double t0 = 0.0;
  double lambda = 0.5;
  std::optional<double> truncation_bound;
  int min_events = 10;
};

/// Throws InvalidArgument when the configuration itself is malformed.
/// Data-dependent checks live in validate().
inline void check_config(const ModelConfig& config) {
  if (!(config.t0 > 0.0) || !std::isfinite(config.t0))
    throw Error(ErrorCode::InvalidArgument, "t0 must be a positive finite number");
  if (!(config.lambda > 0.0 && config.lambda < 1.0))
    throw Error(ErrorCode::InvalidArgument, "quantile must be in (0,1)");
  if (config.truncation_bound && !(*config.truncation_bound > 0.0))
    throw Error(ErrorCode::InvalidArgument, "truncation bound must be positive");
  if (config.min_events < 1) throw Error(ErrorCode::InvalidArgument, "min_events must be >= 1");
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string_view trim(std::string_view s) noexcept {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(trim(line.substr(start)));
      return cells;
    }
    cells.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

inline std::optional<double> parse_double(std::string_view token) noexcept {
  if (token.empty()) return std::nullopt;
  if (token.front() == '+') token.remove_prefix(1);
  double value = 0.0;
  const auto* first = token.data();
  const auto* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace detail

/// Reads comma-separated text with a header row. Records keep file order;
/// blank lines are skipped. Status cells must be 0 or 1.
inline Dataset load_dataset(std::istream& source, const std::string& time_col,
                            const std::string& status_col,
                            const std::vector<std::string>& covariate_cols) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(source, line))
    throw Error(ErrorCode::EmptyDataset, "input has no header row");
  ++line_no;
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  const auto header = detail::split_commas(line);
  auto column_of = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), std::string_view(name));
    if (it == header.end()) throw Error(ErrorCode::MissingColumn, "column '" + name + "' not found");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t time_idx = column_of(time_col);
  const std::size_t status_idx = column_of(status_col);
  std::vector<std::size_t> cov_idx;
  for (const auto& c : covariate_cols) cov_idx.push_back(column_of(c));
  const std::size_t needed =
      1 + std::max({time_idx, status_idx,
                    cov_idx.empty() ? std::size_t{0} : *std::max_element(cov_idx.begin(), cov_idx.end())});

  std::vector<SurvivalRecord> records;
  while (std::getline(source, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    if (cells.size() < needed)
      throw Error(ErrorCode::DimensionMismatch, "row " + std::to_string(line_no) + " has " +
                                                    std::to_string(cells.size()) + " cells, expected at least " +
                                                    std::to_string(needed));
    auto number = [&](std::size_t idx, const std::string& name) {
      const auto value = detail::parse_double(cells[idx]);
      if (!value) throw ParseError(line_no, name, std::string(cells[idx]));
      return *value;
    };
    SurvivalRecord rec;
    rec.time = number(time_idx, time_col);
    if (rec.time < 0.0) throw ParseError(line_no, time_col, std::string(cells[time_idx]));
    const double status = number(status_idx, status_col);
    if (status != 0.0 && status != 1.0)
      throw ParseError(line_no, status_col, std::string(cells[status_idx]));
    rec.status = static_cast<int>(status);
    rec.covariates.reserve(cov_idx.size());
    for (std::size_t k = 0; k < cov_idx.size(); ++k)
      rec.covariates.push_back(number(cov_idx[k], covariate_cols[k]));
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw Error(ErrorCode::EmptyDataset, "no data rows");
  return Dataset(std::move(records), covariate_cols);
}

/// Writes a dataset as CSV with columns time,status,<covariates>. Values are
/// printed with enough digits to reload bit-identically.
inline void write_csv(const Dataset& data, std::ostream& out, std::string_view time_col = "time",
                      std::string_view status_col = "status") {
  std::ostringstream buf;
  buf.imbue(std::locale::classic());
  buf.precision(std::numeric_limits<double>::max_digits10);
  buf << time_col << ',' << status_col;
  for (const auto& name : data.covariate_names()) buf << ',' << name;
  buf << '\n';
  for (const auto& r : data.records()) {
    buf << r.time << ',' << r.status;
    for (double z : r.covariates) buf << ',' << z;
    buf << '\n';
  }
  out << buf.str();
}

// ---------------------------------------------------------------------------
// Validation

struct ValidationReport {
  std::size_t n = 0;
  std::size_t p = 0;
  /// Number of records with status 1 and time strictly below t0.
  std::size_t events_before_t0 = 0;
  double censoring_proportion = 0.0;
  double max_time = 0.0;
  /// False when a censoring occurs at the largest observed time; the
  /// censoring Kaplan-Meier curve then drops to zero after it.
  bool largest_time_is_event = false;
  bool insufficient_events = false;
  /// n < p + 2: fewer observations than parameters plus one.
  bool too_few_records = false;
  bool truncation_out_of_range = false;

  bool ok() const noexcept {
    return !insufficient_events && !too_few_records && !truncation_out_of_range;
  }

  friend bool operator==(const ValidationReport&, const ValidationReport&) = default;
};

inline ValidationReport validate(const Dataset& data, const ModelConfig& config) {
  ValidationReport report;
  report.n = data.n();
  report.p = data.p();
  std::size_t censored = 0;
  for (const auto& r : data.records()) {
    if (r.status == 1 && r.time < config.t0) ++report.events_before_t0;
    if (r.status == 0) ++censored;
    report.max_time = std::max(report.max_time, r.time);
  }
  // Events leave the censoring risk set first, so any censoring at the
  // largest time sends the censoring curve to zero.
  report.largest_time_is_event =
      !data.empty() && std::none_of(data.records().begin(), data.records().end(), [&](const auto& r) {
        return r.status == 0 && r.time == report.max_time;
      });
  report.censoring_proportion =
      data.empty() ? 0.0 : static_cast<double>(censored) / static_cast<double>(data.n());
  report.insufficient_events =
      report.events_before_t0 < static_cast<std::size_t>(std::max(config.min_events, 1));
  report.too_few_records = data.n() < data.p() + 2;
  if (config.truncation_bound) report.truncation_out_of_range = *config.truncation_bound > report.max_time;
  return report;
}

}  // namespace inactivity
