#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "inactivity/core.hpp"
#include "inactivity/error.hpp"
#include "inactivity/km.hpp"
#include "inactivity/model.hpp"
#include "inactivity/parallel.hpp"
#include "inactivity/qreg.hpp"
#include "inactivity/rng.hpp"

namespace inactivity {

// ---------------------------------------------------------------------------
// Perturbation resampling

enum class MultiplierKind {
  UnitExponential,
  /// Every multiplier equal to 1. Reproduces the point estimate; used to
  /// check the resampling path.
  Unit,
};

struct PerturbationOptions {
  std::size_t replicates = 400;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  MultiplierKind multipliers = MultiplierKind::UnitExponential;
  /// Redraws allowed before giving up, as a fraction of `replicates`.
  double max_redraw_fraction = 0.10;
};

struct PerturbationEnsemble {
  /// One replicate beta* per row, in replicate order.
  Eigen::MatrixXd replicates;
  std::size_t B = 0;
  std::uint64_t seed = 0;
  FitResult base_fit;
  std::size_t redraws = 0;
};

/// Fills `xi` with the multipliers of replicate b (1-based), draw `attempt`.
inline void draw_multipliers(std::uint64_t seed, std::size_t b, std::size_t attempt, MultiplierKind kind,
                             std::span<double> xi) {
  if (kind == MultiplierKind::Unit) {
    std::fill(xi.begin(), xi.end(), 1.0);
    return;
  }
  KeyedStream stream(derive_key({seed, static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(attempt)}));
  for (double& v : xi) v = stream.exponential();
}

namespace detail {

/// One perturbed refit: G* from the multiplier-weighted censoring KM,
/// w*_i = xi_i I(contributes_i) / G*(Y_i), then the weighted quantile fit.
inline Eigen::VectorXd perturbed_beta(const PreparedSample& s, std::span<const double> xi,
                                      const SolverOptions& options) {
  const StepFunction g_star = fit_weighted_censoring_km(s.censoring_time, s.status, xi);
  Eigen::VectorXd w = ipcw_weights(s, g_star, xi);
  if (count_positive(w) < static_cast<std::size_t>(s.design.cols()) + 1)
    throw Error(ErrorCode::RankDeficient, "too few positive perturbed weights");
  return solve(make_problem(s, std::move(w)), options).beta;
}

inline bool redrawable(ErrorCode code) noexcept {
  return code == ErrorCode::RankDeficient || code == ErrorCode::ZeroCensoringSurvival;
}

}  // namespace detail

/// Perturbation ensemble around an existing point estimate.
inline PerturbationEnsemble perturb_fit(const Dataset& data, const ModelConfig& config, const FitResult& base,
                                        const PerturbationOptions& options) {
  if (options.replicates < 2) throw Error(ErrorCode::InvalidArgument, "at least 2 perturbations required");
  const auto s = prepare_sample(data, config);
  const auto m = s.design.cols();

  PerturbationEnsemble ens;
  ens.B = options.replicates;
  ens.seed = options.seed;
  ens.base_fit = base;
  ens.replicates.resize(static_cast<Eigen::Index>(options.replicates), m);

  SolverOptions solver;
  solver.initial_basis = base.basis;
  const std::size_t max_redraws =
      static_cast<std::size_t>(std::floor(options.max_redraw_fraction * static_cast<double>(options.replicates)));
  std::atomic<std::size_t> redraws{0};

  parallel_for(options.replicates, options.threads, [&](std::size_t index) {
    std::vector<double> xi(data.n());
    for (std::size_t attempt = 0;; ++attempt) {
      draw_multipliers(options.seed, index + 1, attempt, options.multipliers, xi);
      try {
        ens.replicates.row(static_cast<Eigen::Index>(index)) = detail::perturbed_beta(s, xi, solver).transpose();
        return;
      } catch (const Error& e) {
        if (!detail::redrawable(e.code()) || options.multipliers == MultiplierKind::Unit) throw;
        if (redraws.fetch_add(1) + 1 > max_redraws)
          throw Error(ErrorCode::TooManyRedraws, "more than " + std::to_string(max_redraws) +
                                                     " perturbation redraws; last failure: " + e.what());
      }
    }
  });
  ens.redraws = redraws.load();
  return ens;
}

inline PerturbationEnsemble perturb_fit(const Dataset& data, const ModelConfig& config,
                                        const PerturbationOptions& options) {
  return perturb_fit(data, config, fit(data, config), options);
}

/// Sample covariance of the replicate rows (divisor B - 1).
inline Eigen::MatrixXd covariance_from_ensemble(const Eigen::MatrixXd& replicates) {
  const auto b = replicates.rows();
  if (b < 2) throw Error(ErrorCode::InvalidArgument, "at least 2 replicates required");
  const Eigen::RowVectorXd mean = replicates.colwise().mean();
  const Eigen::MatrixXd centered = replicates.rowwise() - mean;
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(b - 1);
  cov = 0.5 * (cov + cov.transpose()).eval();
  for (Eigen::Index k = 0; k < cov.rows(); ++k)
    if (!(cov(k, k) > 0.0))
      throw Error(ErrorCode::DegenerateEnsemble, "coefficient " + std::to_string(k) + " has zero variance");
  return cov;
}

inline Eigen::MatrixXd covariance_from_ensemble(const PerturbationEnsemble& ens) {
  return covariance_from_ensemble(ens.replicates);
}

struct InferenceReport {
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
  Eigen::VectorXd ci_lower;
  Eigen::VectorXd ci_upper;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd wald_z;
  std::vector<bool> significant;
  double alpha = 0.05;
};

inline double normal_critical_value(double alpha) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - alpha / 2.0);
}

/// Normal-approximation intervals beta_k +/- z_{1-alpha/2} se_k.
inline InferenceReport wald_report(const Eigen::VectorXd& beta, const Eigen::MatrixXd& cov, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be in (0,1)");
  if (cov.rows() != beta.size() || cov.cols() != beta.size())
    throw Error(ErrorCode::LengthMismatch, "covariance does not match beta");
  const double z = normal_critical_value(alpha);
  InferenceReport r;
  r.alpha = alpha;
  r.beta = beta;
  r.covariance = cov;
  const auto m = beta.size();
  r.se.resize(m);
  r.ci_lower.resize(m);
  r.ci_upper.resize(m);
  r.wald_z.resize(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    if (!(cov(k, k) > 0.0))
      throw Error(ErrorCode::NegativeVariance,
                  "variance of coefficient " + std::to_string(k) + " is not positive");
    r.se[k] = std::sqrt(cov(k, k));
    r.ci_lower[k] = beta[k] - z * r.se[k];
    r.ci_upper[k] = beta[k] + z * r.se[k];
    r.wald_z[k] = beta[k] / r.se[k];
    r.significant.push_back(r.ci_lower[k] > 0.0 || r.ci_upper[k] < 0.0);
  }
  return r;
}

inline InferenceReport wald_report(const FitResult& fit, const Eigen::MatrixXd& cov, double alpha) {
  return wald_report(fit.beta, cov, alpha);
}

/// Ensemble percentile intervals (linear interpolation between order
/// statistics). Diagnostic only; reports use the normal approximation.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> percentile_intervals(const Eigen::MatrixXd& replicates,
                                                                        double alpha) {
  const auto b = replicates.rows();
  if (b < 2) throw Error(ErrorCode::InvalidArgument, "at least 2 replicates required");
  Eigen::VectorXd lo(replicates.cols()), hi(replicates.cols());
  auto quantile = [](std::vector<double>& v, double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto k = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(k);
    return k + 1 < v.size() ? v[k] + frac * (v[k + 1] - v[k]) : v[k];
  };
  for (Eigen::Index c = 0; c < replicates.cols(); ++c) {
    std::vector<double> v(replicates.col(c).data(), replicates.col(c).data() + b);
    std::sort(v.begin(), v.end());
    lo[c] = quantile(v, alpha / 2.0);
    hi[c] = quantile(v, 1.0 - alpha / 2.0);
  }
  return {lo, hi};
}

// ---------------------------------------------------------------------------
// Influence function of the censoring Kaplan-Meier estimator

/// Plug-in influence functions IF_i(t) of G_hat(t) = P_hat(C >= t):
///
///   IF_i(t) = -G(t) [ I(Y_i < t, status_i = 0) / r(Y_i)
///                     - sum_{s < t} R_i(s) dLambda(s) / r(s) ]
///
/// with r(s) the at-risk fraction, dLambda the censoring Nelson-Aalen
/// increments and R_i(s) the at-risk indicator. Events tied with a censoring
/// time leave the risk set first, matching the Kaplan-Meier fit. The sum of
/// IF_i(t) over subjects is zero at every t.
class CensoringInfluence {
 public:
  CensoringInfluence(std::span<const double> time, std::span<const std::uint8_t> status, StepFunction g)
      : time_(time.begin(), time.end()), status_(status.begin(), status.end()), g_(std::move(g)) {
    const std::vector<double> ones(time.size(), 1.0);
    const auto table = censoring_risk_table(time, status, ones);
    n_ = static_cast<double>(time.size());
    jumps_ = table.times;
    at_risk_fraction_.resize(jumps_.size());
    cumulative_.assign(jumps_.size() + 1, 0.0);
    for (std::size_t k = 0; k < jumps_.size(); ++k) {
      at_risk_fraction_[k] = table.at_risk[k] / n_;
      const double hazard = table.censored[k] / table.at_risk[k];
      cumulative_[k + 1] = cumulative_[k] + hazard / at_risk_fraction_[k];
    }
    // Number of jumps at which subject i is at risk of censoring.
    risk_count_.resize(time_.size());
    for (std::size_t i = 0; i < time_.size(); ++i) {
      const auto it = status_[i] == 0 ? std::upper_bound(jumps_.begin(), jumps_.end(), time_[i])
                                      : std::lower_bound(jumps_.begin(), jumps_.end(), time_[i]);
      risk_count_[i] = static_cast<std::size_t>(it - jumps_.begin());
    }
  }

  CensoringInfluence(std::span<const double> time, std::span<const std::uint8_t> status)
      : CensoringInfluence(time, status, fit_censoring_km(time, status)) {}

  std::size_t size() const noexcept { return time_.size(); }
  const StepFunction& survival() const noexcept { return g_; }

  /// Number of censoring jumps strictly before t.
  std::size_t jumps_before(double t) const noexcept {
    return static_cast<std::size_t>(std::lower_bound(jumps_.begin(), jumps_.end(), t) - jumps_.begin());
  }

  /// The bracketed martingale integral, without the -G(t) factor.
  double martingale_integral(std::size_t i, std::size_t jumps_before_t) const noexcept {
    double own = 0.0;
    if (status_[i] == 0 && risk_count_[i] <= jumps_before_t && risk_count_[i] > 0)
      own = 1.0 / at_risk_fraction_[risk_count_[i] - 1];
    return own - cumulative_[std::min(jumps_before_t, risk_count_[i])];
  }

  double operator()(std::size_t i, double t) const {
    if (i >= time_.size()) throw Error(ErrorCode::InvalidArgument, "subject index out of range");
    return -g_.evaluate(t) * martingale_integral(i, jumps_before(t));
  }

 private:
  std::vector<double> time_;
  std::vector<std::uint8_t> status_;
  StepFunction g_;
  double n_ = 0.0;
  std::vector<double> jumps_;
  std::vector<double> at_risk_fraction_;
  std::vector<double> cumulative_;
  std::vector<std::size_t> risk_count_;
};

inline double influence_function_censoring(const Dataset& data, const StepFunction& g, std::size_t i, double t) {
  const auto time = data.times();
  const auto status = data.statuses();
  return CensoringInfluence(time, status, g)(i, t);
}

// ---------------------------------------------------------------------------
// Gamma: covariance of the estimating function

struct GammaEstimate {
  Eigen::MatrixXd gamma;
  /// zeta_i = zeta1_i + zeta2_i, one row per subject.
  Eigen::MatrixXd zeta;
  Eigen::MatrixXd zeta1;
  Eigen::MatrixXd zeta2;
};

namespace detail {

inline void compute_zeta(const PreparedSample& s, const StepFunction& g, const Eigen::VectorXd& beta,
                         Eigen::MatrixXd& zeta1, Eigen::MatrixXd& zeta2) {
  const auto n = s.design.rows();
  const auto m = s.design.cols();
  if (beta.size() != m) throw Error(ErrorCode::LengthMismatch, "beta must have p + 1 entries");
  const CensoringInfluence influence(s.censoring_time, s.status, g);

  zeta1 = Eigen::MatrixXd::Zero(n, m);
  zeta2 = Eigen::MatrixXd::Zero(n, m);

  // Per contributing subject j: c_j = Z_j G(Y_j)^{-2} [I(.) - lambda].
  struct Term {
    std::size_t jumps_before;
    double g;
    Eigen::VectorXd c;
  };
  std::vector<Term> terms;
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    if (!s.contributes[ju]) continue;
    const double gj = censoring_survival_at_event(g, s.observed_time[ju], ju);
    const double sign = (s.response[j] <= s.design.row(j).dot(beta) ? 1.0 : 0.0) - s.lambda;
    zeta1.row(j) = (sign / gj) * s.design.row(j);
    terms.push_back({influence.jumps_before(s.observed_time[ju]), gj,
                     (sign / (gj * gj)) * s.design.row(j).transpose()});
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(m);
    for (const auto& t : terms) {
      const double if_ij = -t.g * influence.martingale_integral(static_cast<std::size_t>(i), t.jumps_before);
      if (if_ij != 0.0) acc -= if_ij * t.c;
    }
    zeta2.row(i) = inv_n * acc.transpose();
  }
}

}  // namespace detail

/// Empirical Gamma = n^{-1} sum_i zeta_i zeta_i', where zeta1 is the IPCW
/// score at beta and zeta2 is the first-order effect of estimating G.
inline GammaEstimate estimate_gamma(const Dataset& data, const ModelConfig& config, const Eigen::VectorXd& beta,
                                    const StepFunction& g) {
  const auto s = prepare_sample(data, config);
  GammaEstimate est;
  detail::compute_zeta(s, g, beta, est.zeta1, est.zeta2);
  est.zeta = est.zeta1 + est.zeta2;
  est.gamma = (est.zeta.transpose() * est.zeta) / static_cast<double>(data.n());
  est.gamma = 0.5 * (est.gamma + est.gamma.transpose()).eval();
  return est;
}

inline GammaEstimate estimate_gamma(const Dataset& data, const ModelConfig& config, const Eigen::VectorXd& beta) {
  const auto s = prepare_sample(data, config);
  return estimate_gamma(data, config, beta, fit_censoring_km(s.censoring_time, s.status));
}

/// n^{-1} sum_i zeta_i(lambda_a) zeta_i(lambda_b)'.
inline Eigen::MatrixXd cross_gamma(const Dataset& data, const ModelConfig& config_a, const Eigen::VectorXd& beta_a,
                                   const ModelConfig& config_b, const Eigen::VectorXd& beta_b) {
  if (config_a.t0 != config_b.t0 || config_a.truncation_bound != config_b.truncation_bound)
    throw Error(ErrorCode::InvalidArgument, "cross-quantile covariance needs a common t0 and truncation");
  const auto a = estimate_gamma(data, config_a, beta_a);
  const auto b = estimate_gamma(data, config_b, beta_b);
  return (a.zeta.transpose() * b.zeta) / static_cast<double>(data.n());
}

struct GlobalTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int df = 0;
};

inline constexpr double kMaxGammaCondition = 1e12;

/// Q_n(beta0)' Gamma^{-1} Q_n(beta0), referred to chi-square with p + 1
/// degrees of freedom. Gamma is evaluated at beta0.
inline GlobalTestResult global_test(const Dataset& data, const ModelConfig& config, const Eigen::VectorXd& beta0) {
  const auto s = prepare_sample(data, config);
  if (beta0.size() != s.design.cols()) throw Error(ErrorCode::LengthMismatch, "beta0 must have p + 1 entries");
  const StepFunction g = fit_censoring_km(s.censoring_time, s.status);
  const Eigen::VectorXd q = detail::estimating_function(s, detail::ipcw_weights(s, g), beta0);
  const auto gamma = estimate_gamma(data, config, beta0, g).gamma;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gamma);
  const Eigen::VectorXd values = eig.eigenvalues();
  const double largest = values.maxCoeff();
  const double smallest = values.minCoeff();
  if (!(smallest > 0.0) || largest / smallest >= kMaxGammaCondition)
    throw Error(ErrorCode::SingularGamma, "Gamma is singular or ill-conditioned (condition number >= 1e12)");
  const Eigen::VectorXd rotated = eig.eigenvectors().transpose() * q;
  const double statistic = (rotated.array().square() / values.array()).sum();

  GlobalTestResult r;
  r.statistic = statistic;
  r.df = static_cast<int>(q.size());
  r.p_value = boost::math::cdf(
      boost::math::complement(boost::math::chi_squared_distribution<double>(r.df), statistic));
  return r;
}

}  // namespace inactivity
