#pragma once

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "inactivity/core.hpp"
#include "inactivity/error.hpp"
#include "inactivity/inference.hpp"
#include "inactivity/model.hpp"
#include "inactivity/parallel.hpp"
#include "inactivity/rng.hpp"

namespace inactivity {

/// Two-group Weibull proportional-hazards model
/// S(t | z) = exp(-(rho t)^eta exp(beta z)), z = 0 (control) or 1.
struct WeibullPHSpec {
  double rho = 0.2;
  double eta = 2.0;
  double beta = 0.0;
  std::size_t n_control = 200;
  std::size_t n_intervention = 200;
};

inline void check_spec(const WeibullPHSpec& spec) {
  if (!(spec.rho > 0.0) || !std::isfinite(spec.rho)) throw Error(ErrorCode::InvalidArgument, "rho must be positive");
  if (!(spec.eta > 0.0) || !std::isfinite(spec.eta)) throw Error(ErrorCode::InvalidArgument, "eta must be positive");
  if (!std::isfinite(spec.beta)) throw Error(ErrorCode::InvalidArgument, "beta must be finite");
  if (spec.n_control < 1 || spec.n_intervention < 1)
    throw Error(ErrorCode::InvalidArgument, "group sizes must be at least 1");
}

inline double weibull_survival(const WeibullPHSpec& spec, double z, double t) {
  if (t <= 0.0) return 1.0;
  return std::exp(-std::pow(spec.rho * t, spec.eta) * std::exp(spec.beta * z));
}

/// Median of t0 - T given T <= t0:
/// t0 - (1/rho) [exp(-beta z) {log 2 - log(1 + exp(-(rho t0)^eta exp(beta z)))}]^{1/eta}.
inline double true_median_inactivity(double rho, double eta, double beta, double z, double t0) {
  const double bracket =
      std::exp(-beta * z) * (std::log(2.0) - std::log1p(std::exp(-std::pow(rho * t0, eta) * std::exp(beta * z))));
  if (!(bracket > 0.0) || !std::isfinite(bracket))
    throw Error(ErrorCode::InvalidRegime, "median inactivity time does not exist for these parameters");
  const double theta = t0 - std::pow(bracket, 1.0 / eta) / rho;
  if (!(theta > 0.0)) throw Error(ErrorCode::InvalidRegime, "median inactivity time is not positive");
  return theta;
}

/// lambda-quantile of t0 - T given T <= t0. Equals true_median_inactivity at
/// lambda = 0.5.
inline double true_quantile_inactivity(double rho, double eta, double beta, double z, double t0, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile must be in (0,1)");
  if (lambda == 0.5) return true_median_inactivity(rho, eta, beta, z, t0);
  // The inactivity lambda-quantile is the (1 - lambda) quantile of T on [0, t0].
  const double f0 = -std::expm1(-std::pow(rho * t0, eta) * std::exp(beta * z));
  const double cum_hazard = -std::log1p(-(1.0 - lambda) * f0);
  const double bracket = std::exp(-beta * z) * cum_hazard;
  if (!(bracket > 0.0) || !std::isfinite(bracket))
    throw Error(ErrorCode::InvalidRegime, "quantile inactivity time does not exist for these parameters");
  const double theta = t0 - std::pow(bracket, 1.0 / eta) / rho;
  if (!(theta > 0.0)) throw Error(ErrorCode::InvalidRegime, "quantile inactivity time is not positive");
  return theta;
}

struct GeneratedTimes {
  std::vector<double> time;
  std::vector<double> group;
};

/// Inverse-CDF draws T = (1/rho) (-log U exp(-beta z))^{1/eta}, controls
/// first, then the intervention group.
inline double draw_weibull_time(const WeibullPHSpec& spec, double z, KeyedStream& rng) {
  return std::pow(-std::log(rng.uniform()) * std::exp(-spec.beta * z), 1.0 / spec.eta) / spec.rho;
}

inline GeneratedTimes generate_weibull_ph(const WeibullPHSpec& spec, KeyedStream& rng) {
  check_spec(spec);
  GeneratedTimes out;
  const std::size_t n = spec.n_control + spec.n_intervention;
  out.time.reserve(n);
  out.group.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = i < spec.n_control ? 0.0 : 1.0;
    out.time.push_back(draw_weibull_time(spec, z, rng));
    out.group.push_back(z);
  }
  return out;
}

struct CensoringInterval {
  double a = 0.0;
  double b = std::numeric_limits<double>::infinity();

  bool none() const noexcept { return std::isinf(b); }
};

namespace detail {

/// integral_0^x exp(-(rho c)^eta k) dc via the regularized lower incomplete gamma.
inline double integrated_weibull_survival(double rho, double eta, double k, double x) {
  if (x <= 0.0) return 0.0;
  const double s = 1.0 / eta;
  const double u = k * std::pow(rho * x, eta);
  return std::pow(k, -s) * std::tgamma(s) * boost::math::gamma_p(s, u) / (rho * eta);
}

}  // namespace detail

/// P(C < T) for C ~ U[a, b], averaged over groups in proportion to their sizes.
inline double censoring_probability(const WeibullPHSpec& spec, const CensoringInterval& interval) {
  check_spec(spec);
  if (interval.none()) return 0.0;
  if (!(interval.b > interval.a) || interval.a < 0.0)
    throw Error(ErrorCode::InvalidArgument, "censoring interval needs 0 <= a < b");
  const double n0 = static_cast<double>(spec.n_control);
  const double n1 = static_cast<double>(spec.n_intervention);
  double total = 0.0;
  for (int z = 0; z <= 1; ++z) {
    const double k = std::exp(spec.beta * z);
    const double integral = detail::integrated_weibull_survival(spec.rho, spec.eta, k, interval.b) -
                            detail::integrated_weibull_survival(spec.rho, spec.eta, k, interval.a);
    total += (z == 0 ? n0 : n1) * integral / (interval.b - interval.a);
  }
  return total / (n0 + n1);
}

/// Solves P(C < T) = target for C ~ U[0, b] by bisection on b. Target 0
/// means no censoring.
inline CensoringInterval calibrate_censoring_interval(const WeibullPHSpec& spec, double target) {
  check_spec(spec);
  if (target == 0.0) return {};
  if (!(target > 0.0 && target < 1.0)) throw Error(ErrorCode::NoSolution, "censoring target must be in [0,1)");
  // P(C < T) decreases from 1 (b -> 0) to 0 (b -> infinity).
  auto g = [&](double b) { return censoring_probability(spec, {0.0, b}) - target; };
  double lo = 1.0 / spec.rho, hi = lo;
  while (g(lo) < 0.0) {
    lo /= 2.0;
    if (lo < 1e-300) throw Error(ErrorCode::NoSolution, "censoring target unattainable");
  }
  while (g(hi) > 0.0) {
    hi *= 2.0;
    if (!std::isfinite(hi)) throw Error(ErrorCode::NoSolution, "censoring target unattainable");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-13 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  return {0.0, 0.5 * (lo + hi)};
}

/// One simulated dataset with a single binary covariate "z".
inline Dataset simulate_dataset(const WeibullPHSpec& spec, const CensoringInterval& interval, KeyedStream& rng) {
  const auto times = generate_weibull_ph(spec, rng);
  std::vector<SurvivalRecord> records;
  records.reserve(times.time.size());
  for (std::size_t i = 0; i < times.time.size(); ++i) {
    const double c = interval.none() ? std::numeric_limits<double>::infinity()
                                     : interval.a + (interval.b - interval.a) * rng.uniform();
    const bool event = times.time[i] <= c;
    records.push_back({event ? times.time[i] : c, event ? 1 : 0, {times.group[i]}});
  }
  return Dataset(std::move(records), {"z"});
}

// ---------------------------------------------------------------------------
// Simulation grid

struct SimConfig {
  WeibullPHSpec spec;
  /// Log hazard ratios to run; empty means {spec.beta}.
  std::vector<double> betas;
  std::vector<double> t0_list{15.0};
  double lambda = 0.5;
  std::vector<double> censoring_targets{0.10};
  std::size_t n_sims = 1000;
  std::size_t n_perturb = 400;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  /// Also run the chi-square global test at the true coefficients.
  bool global_test = true;
  /// Cells with a larger fraction of failed simulations are marked failed.
  double max_failure_fraction = 0.02;
};

inline void check_sim_config(const SimConfig& config) {
  check_spec(config.spec);
  if (config.n_sims < 1) throw Error(ErrorCode::InvalidArgument, "n_sims must be at least 1");
  if (config.n_perturb < 2) throw Error(ErrorCode::InvalidArgument, "n_perturb must be at least 2");
  if (!(config.alpha > 0.0 && config.alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be in (0,1)");
  if (!(config.lambda > 0.0 && config.lambda < 1.0))
    throw Error(ErrorCode::InvalidArgument, "quantile must be in (0,1)");
  if (config.t0_list.empty()) throw Error(ErrorCode::InvalidArgument, "t0 list is empty");
  for (double t0 : config.t0_list)
    if (!(t0 > 0.0) || !std::isfinite(t0)) throw Error(ErrorCode::InvalidArgument, "t0 must be positive");
  if (config.censoring_targets.empty()) throw Error(ErrorCode::InvalidArgument, "censoring target list is empty");
  for (double c : config.censoring_targets)
    if (!(c >= 0.0 && c < 1.0)) throw Error(ErrorCode::InvalidArgument, "censoring targets must be in [0,1)");
  for (double b : config.betas)
    if (!std::isfinite(b)) throw Error(ErrorCode::InvalidArgument, "beta must be finite");
}

/// Summary of one (t0, censoring, beta) cell.
struct SimulationCell {
  double t0 = 0.0;
  double censoring_target = 0.0;
  double hazard_beta = 0.0;
  std::size_t n_control = 0;
  std::size_t n_intervention = 0;
  CensoringInterval interval;

  double true_beta0 = 0.0;
  double true_beta1 = 0.0;
  double true_theta0 = 0.0;
  double true_theta1 = 0.0;

  double bias_beta0 = 0.0;
  double sd_beta0 = 0.0;
  double ase_beta0 = 0.0;
  double bias_beta1 = 0.0;
  double sd_beta1 = 0.0;
  double ase_beta1 = 0.0;
  double theta0_hat = 0.0;
  double theta1_hat = 0.0;
  /// Fraction of simulations whose CI for beta1 excludes 0.
  double rejection_rate = 0.0;
  /// Fraction rejecting the global test at the true coefficients.
  double global_rejection_rate = std::numeric_limits<double>::quiet_NaN();
  double achieved_censoring = 0.0;

  std::size_t n_sims = 0;
  std::size_t n_completed = 0;
  std::size_t n_failed = 0;
  std::size_t global_test_failures = 0;
  /// Fits whose estimating equation exceeded the active-set bound.
  std::size_t root_bound_violations = 0;
  std::vector<std::string> failure_messages;
  bool failed = false;
};

struct SimulationTable {
  std::vector<SimulationCell> cells;
  double lambda = 0.5;
  double alpha = 0.05;
  std::size_t n_sims = 0;
  std::size_t n_perturb = 0;
  std::uint64_t seed = 0;
};

/// Per-simulation outcome, kept so aggregation is schedule-independent.
struct SimulationDraw {
  bool ok = false;
  std::string error;
  Eigen::Vector2d beta = Eigen::Vector2d::Zero();
  Eigen::Vector2d se = Eigen::Vector2d::Zero();
  bool reject = false;
  std::optional<bool> global_reject;
  bool root_bound_ok = true;
  double censoring = 0.0;
};

inline std::uint64_t cell_key(std::uint64_t seed, double t0, double target, double beta, std::size_t n0,
                              std::size_t n1, double lambda) {
  return derive_key({seed, std::bit_cast<std::uint64_t>(t0), std::bit_cast<std::uint64_t>(target),
                     std::bit_cast<std::uint64_t>(beta), static_cast<std::uint64_t>(n0),
                     static_cast<std::uint64_t>(n1), std::bit_cast<std::uint64_t>(lambda)});
}

namespace detail {

inline SimulationDraw simulate_once(const WeibullPHSpec& spec, const CensoringInterval& interval,
                                    const ModelConfig& model, const Eigen::Vector2d& truth, const SimConfig& config,
                                    std::uint64_t key) {
  SimulationDraw d;
  KeyedStream rng(derive_key({key, 0}));
  const Dataset data = simulate_dataset(spec, interval, rng);
  std::size_t censored = 0;
  for (const auto& r : data.records()) censored += r.status == 0 ? 1 : 0;
  d.censoring = static_cast<double>(censored) / static_cast<double>(data.n());
  try {
    const FitResult f = fit(data, model);
    d.root_bound_ok = f.eq_residual.cwiseAbs().maxCoeff() <= estimating_equation_bound(data, f) * (1.0 + 1e-9);

    PerturbationOptions popt;
    popt.replicates = config.n_perturb;
    popt.seed = derive_key({key, 1});
    popt.threads = 1;
    const auto ens = perturb_fit(data, model, f, popt);
    const auto report = wald_report(f, covariance_from_ensemble(ens), config.alpha);
    d.beta = f.beta;
    d.se = report.se;
    d.reject = report.significant[1];
    d.ok = true;
  } catch (const Error& e) {
    d.error = e.what();
    return d;
  }
  if (config.global_test) {
    try {
      d.global_reject = global_test(data, model, truth).p_value < config.alpha;
    } catch (const Error&) {
      d.global_reject.reset();
    }
  }
  return d;
}

inline double sample_sd(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace detail

/// Runs n_sims replications of one cell.
inline SimulationCell run_cell(const SimConfig& config, double t0, double target, double beta) {
  WeibullPHSpec spec = config.spec;
  spec.beta = beta;
  SimulationCell cell;
  cell.t0 = t0;
  cell.censoring_target = target;
  cell.hazard_beta = beta;
  cell.n_control = spec.n_control;
  cell.n_intervention = spec.n_intervention;
  cell.n_sims = config.n_sims;
  cell.interval = calibrate_censoring_interval(spec, target);
  cell.true_theta0 = true_quantile_inactivity(spec.rho, spec.eta, beta, 0.0, t0, config.lambda);
  cell.true_theta1 = true_quantile_inactivity(spec.rho, spec.eta, beta, 1.0, t0, config.lambda);
  cell.true_beta0 = std::log(cell.true_theta0);
  cell.true_beta1 = std::log(cell.true_theta1) - cell.true_beta0;
  const Eigen::Vector2d truth(cell.true_beta0, cell.true_beta1);

  ModelConfig model;
  model.t0 = t0;
  model.lambda = config.lambda;

  const std::uint64_t key =
      cell_key(config.seed, t0, target, beta, spec.n_control, spec.n_intervention, config.lambda);
  std::vector<SimulationDraw> draws(config.n_sims);
  parallel_for(config.n_sims, config.threads, [&](std::size_t s) {
    draws[s] = detail::simulate_once(spec, cell.interval, model, truth, config,
                                     derive_key({key, static_cast<std::uint64_t>(s)}));
  });

  std::vector<double> b0, b1, se0, se1, th0, th1;
  std::size_t rejections = 0, global_rejections = 0, global_runs = 0;
  double censoring_total = 0.0;
  for (const auto& d : draws) {
    censoring_total += d.censoring;
    if (!d.ok) {
      ++cell.n_failed;
      if (cell.failure_messages.size() < 5) cell.failure_messages.push_back(d.error);
      continue;
    }
    b0.push_back(d.beta[0]);
    b1.push_back(d.beta[1]);
    se0.push_back(d.se[0]);
    se1.push_back(d.se[1]);
    th0.push_back(std::exp(d.beta[0]));
    th1.push_back(std::exp(d.beta[0] + d.beta[1]));
    rejections += d.reject ? 1 : 0;
    cell.root_bound_violations += d.root_bound_ok ? 0 : 1;
    if (d.global_reject) {
      ++global_runs;
      global_rejections += *d.global_reject ? 1 : 0;
    } else if (config.global_test) {
      ++cell.global_test_failures;
    }
  }
  cell.n_completed = b0.size();
  cell.achieved_censoring = censoring_total / static_cast<double>(config.n_sims);
  cell.failed = static_cast<double>(cell.n_failed) > config.max_failure_fraction * static_cast<double>(config.n_sims);
  if (cell.n_completed > 0) {
    const double m0 = detail::mean_of(b0), m1 = detail::mean_of(b1);
    cell.bias_beta0 = m0 - cell.true_beta0;
    cell.bias_beta1 = m1 - cell.true_beta1;
    cell.sd_beta0 = detail::sample_sd(b0, m0);
    cell.sd_beta1 = detail::sample_sd(b1, m1);
    cell.ase_beta0 = detail::mean_of(se0);
    cell.ase_beta1 = detail::mean_of(se1);
    cell.theta0_hat = detail::mean_of(th0);
    cell.theta1_hat = detail::mean_of(th1);
    cell.rejection_rate = static_cast<double>(rejections) / static_cast<double>(cell.n_completed);
  }
  if (global_runs > 0)
    cell.global_rejection_rate = static_cast<double>(global_rejections) / static_cast<double>(global_runs);
  return cell;
}

/// Every (beta, t0, censoring) cell of the grid, in that nesting order.
inline SimulationTable run_simulation(const SimConfig& config) {
  check_sim_config(config);
  SimulationTable table;
  table.lambda = config.lambda;
  table.alpha = config.alpha;
  table.n_sims = config.n_sims;
  table.n_perturb = config.n_perturb;
  table.seed = config.seed;
  const std::vector<double> betas = config.betas.empty() ? std::vector<double>{config.spec.beta} : config.betas;
  for (double beta : betas)
    for (double t0 : config.t0_list)
      for (double target : config.censoring_targets) table.cells.push_back(run_cell(config, t0, target, beta));
  return table;
}

/// The null plus the three alternatives used for power curves.
inline const std::vector<double>& default_power_betas() {
  static const std::vector<double> betas{0.0, -0.44, -0.82, -1.18};
  return betas;
}

inline SimulationTable run_power_study(SimConfig config) {
  if (config.betas.empty()) config.betas = default_power_betas();
  return run_simulation(config);
}

}  // namespace inactivity
