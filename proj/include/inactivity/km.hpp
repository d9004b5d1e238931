#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "inactivity/core.hpp"
#include "inactivity/error.hpp"

namespace inactivity {

/// Right-continuous survival curve starting at 1. evaluate() returns the
/// left limit, so a curve fitted to censoring times estimates P(C >= t).
class StepFunction {
 public:
  StepFunction() = default;

  StepFunction(std::vector<double> jump_times, std::vector<double> values)
      : jump_times_(std::move(jump_times)), values_(std::move(values)) {
    if (jump_times_.size() != values_.size())
      throw Error(ErrorCode::LengthMismatch, "jump times and values differ in length");
    double previous_time = -1.0;
    double previous_value = 1.0;
    for (std::size_t k = 0; k < values_.size(); ++k) {
      if (!(jump_times_[k] > previous_time) || jump_times_[k] < 0.0)
        throw Error(ErrorCode::InvalidArgument, "jump times must be nonnegative and strictly increasing");
      if (!(values_[k] >= 0.0 && values_[k] <= previous_value))
        throw Error(ErrorCode::InvalidArgument, "step values must be nonincreasing within [0, 1]");
      previous_time = jump_times_[k];
      previous_value = values_[k];
    }
  }

  /// Value just before t; 1 at or before the first jump.
  double evaluate(double t) const noexcept {
    const auto it = std::lower_bound(jump_times_.begin(), jump_times_.end(), t);
    if (it == jump_times_.begin()) return 1.0;
    return values_[static_cast<std::size_t>(it - jump_times_.begin()) - 1];
  }

  double operator()(double t) const noexcept { return evaluate(t); }

  const std::vector<double>& jump_times() const noexcept { return jump_times_; }
  const std::vector<double>& values() const noexcept { return values_; }
  static constexpr double initial_value() noexcept { return 1.0; }

  friend bool operator==(const StepFunction&, const StepFunction&) = default;

 private:
  std::vector<double> jump_times_;
  std::vector<double> values_;
};

inline double evaluate(const StepFunction& f, double t) noexcept { return f.evaluate(t); }

/// Censoring counting-process summary at each distinct censoring time s:
/// d(s) = weighted censorings at s, r(s) = weighted number still at risk of
/// censoring at s. Events tied with s leave the risk set before s.
struct CensoringRiskTable {
  std::vector<double> times;
  std::vector<double> censored;
  std::vector<double> at_risk;
  double total_weight = 0.0;
};

namespace detail {

inline void check_km_input(std::span<const double> time, std::span<const std::uint8_t> status,
                           std::span<const double> weight) {
  if (time.empty()) throw Error(ErrorCode::EmptyDataset, "no records");
  if (status.size() != time.size() || weight.size() != time.size())
    throw Error(ErrorCode::LengthMismatch, "times, statuses and weights must have equal length");
  for (std::size_t i = 0; i < weight.size(); ++i)
    if (!(weight[i] > 0.0) || !std::isfinite(weight[i]))
      throw Error(ErrorCode::NonPositiveWeight, "weight " + std::to_string(i) + " is not positive");
}

}  // namespace detail

inline CensoringRiskTable censoring_risk_table(std::span<const double> time,
                                               std::span<const std::uint8_t> status,
                                               std::span<const double> weight) {
  detail::check_km_input(time, status, weight);
  const std::size_t n = time.size();

  // Ascending time; events before censorings at the same time.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (time[a] != time[b]) return time[a] < time[b];
    return status[a] > status[b];
  });

  std::vector<double> suffix(n + 1, 0.0);
  for (std::size_t k = n; k-- > 0;) suffix[k] = suffix[k + 1] + weight[order[k]];

  CensoringRiskTable table;
  table.total_weight = suffix[0];
  for (std::size_t k = 0; k < n;) {
    const std::size_t i = order[k];
    if (status[i] != 0) {
      ++k;
      continue;
    }
    const double s = time[i];
    double d = 0.0;
    std::size_t j = k;
    for (; j < n && time[order[j]] == s; ++j) d += weight[order[j]];
    table.times.push_back(s);
    table.censored.push_back(d);
    table.at_risk.push_back(suffix[k]);
    k = j;
  }
  return table;
}

inline StepFunction km_from_risk_table(const CensoringRiskTable& table) {
  std::vector<double> values;
  values.reserve(table.times.size());
  double survival = 1.0;
  for (std::size_t k = 0; k < table.times.size(); ++k) {
    survival *= 1.0 - table.censored[k] / table.at_risk[k];
    if (survival < 0.0) survival = 0.0;
    values.push_back(survival);
  }
  return StepFunction(table.times, std::move(values));
}

/// Product-limit estimate of P(C >= t) with per-record multipliers on both the
/// risk set and the censoring indicator.
inline StepFunction fit_weighted_censoring_km(std::span<const double> time,
                                              std::span<const std::uint8_t> status,
                                              std::span<const double> weight) {
  return km_from_risk_table(censoring_risk_table(time, status, weight));
}

inline StepFunction fit_censoring_km(std::span<const double> time, std::span<const std::uint8_t> status) {
  const std::vector<double> ones(time.size(), 1.0);
  return fit_weighted_censoring_km(time, status, ones);
}

inline StepFunction fit_censoring_km(const Dataset& data) {
  if (data.empty()) throw Error(ErrorCode::EmptyDataset, "no records");
  const auto t = data.times();
  const auto s = data.statuses();
  return fit_censoring_km(t, s);
}

inline StepFunction fit_weighted_censoring_km(const Dataset& data, std::span<const double> xi) {
  if (data.empty()) throw Error(ErrorCode::EmptyDataset, "no records");
  if (xi.size() != data.n())
    throw Error(ErrorCode::LengthMismatch, "expected " + std::to_string(data.n()) + " multipliers");
  const auto t = data.times();
  const auto s = data.statuses();
  return fit_weighted_censoring_km(t, s, xi);
}

/// Observation times with censored values above `bound` replaced by `bound`;
/// events are left untouched.
inline std::vector<double> truncated_censoring_times(const Dataset& data, double bound) {
  std::vector<double> out = data.times();
  for (std::size_t i = 0; i < out.size(); ++i)
    if (data[i].status == 0 && out[i] > bound) out[i] = bound;
  return out;
}

}  // namespace inactivity
