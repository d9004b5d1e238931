#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "inactivity/core.hpp"
#include "inactivity/error.hpp"
#include "inactivity/km.hpp"
#include "inactivity/qreg.hpp"

namespace inactivity {

/// Inactivity times t0 - Y below this are dropped from the fit.
inline constexpr double kMinInactivityTime = 1e-12;

struct FitResult {
  Eigen::VectorXd beta;
  double lambda = 0.5;
  double t0 = 0.0;
  std::size_t n = 0;
  std::size_t n_effective = 0;
  Eigen::VectorXd weights;
  StepFunction censoring_km;
  /// Q_n(beta_hat), including the n^{-1/2} factor.
  Eigen::VectorXd eq_residual;
  double objective = 0.0;
  std::vector<std::size_t> active_set;
  std::vector<std::size_t> basis;
  std::size_t excluded_near_ties = 0;
  std::vector<std::string> warnings;
};

/// Intercept-first design, log inactivity responses and the censoring data
/// (after optional truncation) for one (data, config) pair. Everything the
/// perturbation loop needs except the multipliers.
struct PreparedSample {
  Eigen::MatrixXd design;
  Eigen::VectorXd response;
  std::vector<std::uint8_t> contributes;
  std::vector<double> observed_time;
  std::vector<double> censoring_time;
  std::vector<std::uint8_t> status;
  std::size_t excluded_near_ties = 0;
  double t0 = 0.0;
  double lambda = 0.5;
};

inline Eigen::MatrixXd design_matrix(const Dataset& data) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(data.n()), static_cast<Eigen::Index>(data.p() + 1));
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    x(row, 0) = 1.0;
    for (std::size_t k = 0; k < data.p(); ++k)
      x(row, static_cast<Eigen::Index>(k + 1)) = data[i].covariates[k];
  }
  return x;
}

inline PreparedSample prepare_sample(const Dataset& data, const ModelConfig& config) {
  check_config(config);
  if (data.empty()) throw Error(ErrorCode::EmptyDataset, "no records");
  PreparedSample s;
  s.t0 = config.t0;
  s.lambda = config.lambda;
  s.design = design_matrix(data);
  s.observed_time = data.times();
  s.status = data.statuses();
  s.censoring_time =
      config.truncation_bound ? truncated_censoring_times(data, *config.truncation_bound) : s.observed_time;
  s.response = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.n()));
  s.contributes.assign(data.n(), 0);
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (data[i].status != 1 || !(data[i].time < config.t0)) continue;
    const double gap = config.t0 - data[i].time;
    if (gap < kMinInactivityTime) {
      ++s.excluded_near_ties;
      continue;
    }
    s.contributes[i] = 1;
    s.response[static_cast<Eigen::Index>(i)] = std::log(gap);
  }
  return s;
}

namespace detail {

inline double censoring_survival_at_event(const StepFunction& g, double time, std::size_t i) {
  const double value = g.evaluate(time);
  if (!(value > 0.0))
    throw Error(ErrorCode::ZeroCensoringSurvival,
                "censoring survival is zero at record " + std::to_string(i) +
                    "; set a truncation bound L slightly below the largest censoring time");
  return value;
}

/// w_i = multiplier_i * I(contributes_i) / G(Y_i).
inline Eigen::VectorXd ipcw_weights(const PreparedSample& s, const StepFunction& g,
                                    std::span<const double> multipliers = {}) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.contributes.size()));
  for (std::size_t i = 0; i < s.contributes.size(); ++i) {
    if (!s.contributes[i]) continue;
    const double base = 1.0 / censoring_survival_at_event(g, s.observed_time[i], i);
    w[static_cast<Eigen::Index>(i)] = multipliers.empty() ? base : multipliers[i] * base;
  }
  return w;
}

inline Eigen::VectorXd estimating_function(const PreparedSample& s, const Eigen::VectorXd& weights,
                                           const Eigen::VectorXd& beta) {
  Eigen::VectorXd q = Eigen::VectorXd::Zero(s.design.cols());
  for (Eigen::Index i = 0; i < s.design.rows(); ++i) {
    if (weights[i] == 0.0) continue;
    const double below = s.response[i] <= s.design.row(i).dot(beta) ? 1.0 : 0.0;
    q += weights[i] * (s.lambda - below) * s.design.row(i).transpose();
  }
  return q / std::sqrt(static_cast<double>(s.design.rows()));
}

inline std::size_t count_positive(const Eigen::VectorXd& w) {
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < w.size(); ++i) count += w[i] > 0.0 ? 1 : 0;
  return count;
}

inline QRProblem make_problem(const PreparedSample& s, Eigen::VectorXd weights) {
  return QRProblem{s.design, s.response, std::move(weights), s.lambda};
}

}  // namespace detail

/// w_i = I(Y_i < t0, status_i = 1) / G(Y_i).
inline Eigen::VectorXd compute_ipcw_weights(const Dataset& data, double t0, const StepFunction& g) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.n()));
  for (std::size_t i = 0; i < data.n(); ++i)
    if (data[i].status == 1 && data[i].time < t0)
      w[static_cast<Eigen::Index>(i)] = 1.0 / detail::censoring_survival_at_event(g, data[i].time, i);
  return w;
}

/// Q_n(beta) = n^{-1/2} sum_i Z_i w_i [lambda - I{log(t0 - Y_i) <= beta'Z_i}].
inline Eigen::VectorXd estimating_equation(const Dataset& data, const ModelConfig& config,
                                           const Eigen::VectorXd& beta, const StepFunction& g) {
  const auto s = prepare_sample(data, config);
  if (beta.size() != s.design.cols())
    throw Error(ErrorCode::LengthMismatch, "beta must have p + 1 entries");
  return detail::estimating_function(s, detail::ipcw_weights(s, g), beta);
}

inline FitResult fit(const Dataset& data, const ModelConfig& config, const SolverOptions& options = {}) {
  check_config(config);
  const auto report = validate(data, config);
  if (report.truncation_out_of_range)
    throw Error(ErrorCode::InvalidArgument, "truncation bound exceeds the largest observed time");
  if (report.insufficient_events)
    throw Error(ErrorCode::InsufficientEvents,
                std::to_string(report.events_before_t0) + " events before t0, at least " +
                    std::to_string(config.min_events) + " required");

  const auto s = prepare_sample(data, config);
  FitResult result;
  result.lambda = config.lambda;
  result.t0 = config.t0;
  result.n = data.n();
  result.excluded_near_ties = s.excluded_near_ties;
  if (s.excluded_near_ties > 0)
    result.warnings.push_back(std::to_string(s.excluded_near_ties) +
                              " event(s) within 1e-12 of t0 excluded from the fit");
  result.censoring_km = fit_censoring_km(s.censoring_time, s.status);
  result.weights = detail::ipcw_weights(s, result.censoring_km);
  result.n_effective = detail::count_positive(result.weights);
  if (result.n_effective < data.p() + 2)
    throw Error(ErrorCode::InsufficientEvents,
                std::to_string(result.n_effective) + " usable events before t0 for " +
                    std::to_string(data.p() + 1) + " coefficients");

  const auto sol = solve(detail::make_problem(s, result.weights), options);
  result.beta = sol.beta;
  result.objective = sol.objective;
  result.active_set = sol.active_set;
  result.basis = sol.basis;
  result.eq_residual = detail::estimating_function(s, result.weights, result.beta);
  return result;
}

/// n^{-1/2} sum_{i in active} w_i max_k |Z_ik|, the bound on every
/// coordinate of Q_n at a vertex solution.
inline double estimating_equation_bound(const Dataset& data, const FitResult& fit) {
  double total = 0.0;
  for (std::size_t i : fit.active_set) {
    double zmax = 1.0;
    for (double z : data[i].covariates) zmax = std::max(zmax, std::abs(z));
    total += fit.weights[static_cast<Eigen::Index>(i)] * zmax;
  }
  return total / std::sqrt(static_cast<double>(data.n()));
}

inline double predict_quantile_inactivity(const Eigen::VectorXd& beta, std::span<const double> z) {
  if (static_cast<std::size_t>(beta.size()) != z.size() + 1)
    throw Error(ErrorCode::LengthMismatch, "covariate vector must have p entries");
  double eta = beta[0];
  for (std::size_t k = 0; k < z.size(); ++k) eta += beta[static_cast<Eigen::Index>(k + 1)] * z[k];
  return std::exp(eta);
}

/// exp(beta_hat' (1, z)): the fitted lambda-quantile of t0 - T among
/// subjects with T < t0 and covariates z.
inline double predict_quantile_inactivity(const FitResult& fit, std::span<const double> z) {
  return predict_quantile_inactivity(fit.beta, z);
}

}  // namespace inactivity
