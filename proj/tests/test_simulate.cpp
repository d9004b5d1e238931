#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>

#include "inactivity/simulate.hpp"

using namespace inactivity;

namespace {

double ks_distance(std::vector<double> sample, const WeibullPHSpec& spec, double z) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double cdf = 1.0 - weibull_survival(spec, z, sample[i]);
    worst = std::max({worst, std::abs(cdf - static_cast<double>(i) / n), std::abs(cdf - static_cast<double>(i + 1) / n)});
  }
  return worst;
}

std::vector<double> draws(const WeibullPHSpec& spec, double z, std::size_t count, std::uint64_t key) {
  KeyedStream rng(key);
  std::vector<double> out(count);
  for (auto& t : out) t = draw_weibull_time(spec, z, rng);
  return out;
}

SimConfig small_config() {
  SimConfig c;
  c.spec.n_control = c.spec.n_intervention = 60;
  c.n_sims = 12;
  c.n_perturb = 20;
  c.seed = 5;
  c.threads = 1;
  return c;
}

}  // namespace

TEST(Truth, MedianInactivityAtPublishedTimePoints) {
  const std::vector<std::pair<double, double>> expected{{15, 10.8}, {14, 9.8}, {13, 8.8}, {12, 7.8}};
  for (const auto& [t0, theta] : expected) {
    EXPECT_NEAR(true_median_inactivity(0.2, 2.0, 0.0, 0.0, t0), theta, 0.05);
    EXPECT_EQ(true_median_inactivity(0.2, 2.0, 0.0, 1.0, t0), true_median_inactivity(0.2, 2.0, 0.0, 0.0, t0));
  }
  EXPECT_NEAR(true_median_inactivity(0.2, 2.0, 0.0, 0.0, 15.0), 10.8376, 1e-4);
  const std::vector<std::pair<double, double>> intercepts{{15, 2.38}, {14, 2.29}, {13, 2.18}, {12, 2.06}};
  for (const auto& [t0, b0] : intercepts)
    EXPECT_NEAR(std::log(true_median_inactivity(0.2, 2.0, 0.0, 0.0, t0)), b0, 0.005);
}

TEST(Truth, AlternativesShiftGroupDifferenceByOneTwoThree) {
  const double control = true_median_inactivity(0.2, 2.0, -0.44, 0.0, 15.0);
  int step = 1;
  for (double beta : {-0.44, -0.82, -1.18}) {
    const double diff = control - true_median_inactivity(0.2, 2.0, beta, 1.0, 15.0);
    EXPECT_NEAR(diff, static_cast<double>(step++), 0.06) << beta;
  }
}

TEST(Truth, InvalidRegime) {
  try {
    true_median_inactivity(0.2, 2.0, 0.0, 0.0, -1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidRegime);
  }
}

TEST(Truth, GeneralQuantileMatchesDefinition) {
  const WeibullPHSpec spec{0.2, 2.0, -0.5};
  for (double lambda : {0.1, 0.25, 0.5, 0.75, 0.9}) {
    const double t0 = 13.0;
    const double theta = true_quantile_inactivity(0.2, 2.0, -0.5, 1.0, t0, lambda);
    // P(t0 - T <= theta | T <= t0) = lambda
    const double f_t0 = 1.0 - weibull_survival(spec, 1.0, t0);
    const double f_lo = 1.0 - weibull_survival(spec, 1.0, t0 - theta);
    EXPECT_NEAR((f_t0 - f_lo) / f_t0, lambda, 1e-12) << lambda;
  }
  EXPECT_EQ(true_quantile_inactivity(0.2, 2.0, 0.3, 1.0, 12.0, 0.5), true_median_inactivity(0.2, 2.0, 0.3, 1.0, 12.0));
  EXPECT_NEAR(true_quantile_inactivity(0.2, 2.0, 0.3, 1.0, 12.0, 0.5 + 1e-13),
              true_median_inactivity(0.2, 2.0, 0.3, 1.0, 12.0), 1e-9);
}

TEST(Generation, SurvivalAtFiveAndMedian) {
  const WeibullPHSpec spec;
  auto t = draws(spec, 0.0, 100000, 1);
  double above = 0.0;
  for (double x : t) above += x > 5.0 ? 1.0 : 0.0;
  EXPECT_NEAR(above / 1e5, std::exp(-1.0), 0.01);
  std::nth_element(t.begin(), t.begin() + 50000, t.end());
  EXPECT_NEAR(t[50000], 5.0 * std::sqrt(std::log(2.0)), 0.05);
}

TEST(Generation, KolmogorovSmirnovDistance) {
  for (double beta : {0.0, -0.82}) {
    const WeibullPHSpec spec{0.2, 2.0, beta};
    for (double z : {0.0, 1.0}) EXPECT_LT(ks_distance(draws(spec, z, 100000, 7 + static_cast<int>(z)), spec, z), 0.01);
  }
}

TEST(Generation, NegativeHazardRatioLengthensSurvival) {
  const WeibullPHSpec spec{0.2, 2.0, -0.82};
  auto control = draws(spec, 0.0, 50000, 3);
  auto treated = draws(spec, 1.0, 50000, 4);
  std::sort(control.begin(), control.end());
  std::sort(treated.begin(), treated.end());
  for (double t = 0.5; t < 20.0; t += 0.5) {
    const auto s0 = static_cast<double>(control.end() - std::upper_bound(control.begin(), control.end(), t));
    const auto s1 = static_cast<double>(treated.end() - std::upper_bound(treated.begin(), treated.end(), t));
    EXPECT_GE(s1, s0) << t;
  }
  KeyedStream rng(1);
  const auto both = generate_weibull_ph(WeibullPHSpec{0.2, 2.0, 0.0, 3, 2}, rng);
  EXPECT_EQ(both.group, (std::vector<double>{0, 0, 0, 1, 1}));
}

TEST(Calibration, ProbabilityDecreasesInB) {
  const WeibullPHSpec spec{0.2, 2.0, -0.82};
  double previous = 1.0;
  for (double b = 0.5; b < 400.0; b *= 1.5) {
    const double p = censoring_probability(spec, {0.0, b});
    EXPECT_LT(p, previous);
    previous = p;
  }
  EXPECT_EQ(censoring_probability(spec, {}), 0.0);
}

TEST(Calibration, MonteCarloGate) {
  for (double beta : {0.0, -0.82}) {
    const WeibullPHSpec spec{0.2, 2.0, beta, 500000, 500000};
    for (double target : {0.10, 0.20, 0.30}) {
      const auto interval = calibrate_censoring_interval(spec, target);
      EXPECT_EQ(interval.a, 0.0);
      EXPECT_NEAR(censoring_probability(spec, interval), target, 1e-9);
      KeyedStream rng(derive_key({11, static_cast<std::uint64_t>(target * 100)}));
      const auto d = simulate_dataset(spec, interval, rng);
      double censored = 0.0;
      for (const auto& r : d.records()) censored += r.status == 0 ? 1.0 : 0.0;
      EXPECT_NEAR(censored / static_cast<double>(d.n()), target, 0.005) << beta << " " << target;
    }
  }
}

TEST(Calibration, EdgeTargets) {
  const WeibullPHSpec spec;
  EXPECT_TRUE(calibrate_censoring_interval(spec, 0.0).none());
  try {
    calibrate_censoring_interval(spec, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoSolution);
  }
  EXPECT_NEAR(censoring_probability(spec, calibrate_censoring_interval(spec, 0.95)), 0.95, 1e-9);
  EXPECT_NEAR(censoring_probability(spec, calibrate_censoring_interval(spec, 0.001)), 0.001, 1e-9);
}

TEST(SimulateDataset, ObservedIsMinimumOfEventAndCensoring) {
  const WeibullPHSpec spec;
  const auto interval = calibrate_censoring_interval(spec, 0.3);
  KeyedStream a(9), b(9);
  const auto d = simulate_dataset(spec, interval, a);
  const auto again = simulate_dataset(spec, interval, b);
  EXPECT_EQ(d, again);
  EXPECT_EQ(d.n(), 400u);
  EXPECT_EQ(d.covariate_names(), std::vector<std::string>{"z"});
  for (const auto& r : d.records()) {
    EXPECT_LE(r.time, interval.b);
    if (r.status == 0) EXPECT_LT(r.time, interval.b);
  }
}

TEST(Fitting, GroupLabelSwapNegatesEffect) {
  const WeibullPHSpec spec;
  const auto interval = calibrate_censoring_interval(spec, 0.2);
  ModelConfig config;
  config.t0 = 15.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    KeyedStream rng(derive_key({13, seed}));
    const auto d = simulate_dataset(spec, interval, rng);
    std::vector<SurvivalRecord> swapped = d.records();
    for (auto& r : swapped) r.covariates[0] = 1.0 - r.covariates[0];
    const auto f = fit(d, config);
    const auto g = fit(Dataset(swapped, {"z"}), config);
    EXPECT_NEAR(g.beta[1], -f.beta[1], 1e-12);
    EXPECT_NEAR(g.beta[0], f.beta[0] + f.beta[1], 1e-12);
  }
}

TEST(Fitting, ErrorShrinksWithSampleSize) {
  ModelConfig config;
  config.t0 = 15.0;
  auto median_error = [&](std::size_t per_group) {
    const WeibullPHSpec spec{0.2, 2.0, 0.0, per_group, per_group};
    const auto interval = calibrate_censoring_interval(spec, 0.1);
    std::vector<double> errors;
    for (std::uint64_t s = 0; s < 200; ++s) {
      KeyedStream rng(derive_key({per_group, s}));
      errors.push_back(std::abs(fit(simulate_dataset(spec, interval, rng), config).beta[1]));
    }
    std::nth_element(errors.begin(), errors.begin() + 100, errors.end());
    return errors[100];
  };
  EXPECT_LE(median_error(1000), 0.7 * median_error(200));
}

TEST(RunSimulation, DeterministicAndScheduleIndependent) {
  auto c = small_config();
  c.betas = {0.0, -0.82};
  c.censoring_targets = {0.1, 0.3};
  const auto a = run_simulation(c);
  c.threads = 4;
  const auto b = run_simulation(c);
  ASSERT_EQ(a.cells.size(), 4u);
  for (std::size_t k = 0; k < a.cells.size(); ++k) {
    EXPECT_EQ(a.cells[k].bias_beta1, b.cells[k].bias_beta1);
    EXPECT_EQ(a.cells[k].ase_beta1, b.cells[k].ase_beta1);
    EXPECT_EQ(a.cells[k].rejection_rate, b.cells[k].rejection_rate);
    EXPECT_EQ(a.cells[k].achieved_censoring, b.cells[k].achieved_censoring);
  }
  // Cells depend only on their own parameters, not their grid position.
  c.betas = {-0.82};
  c.censoring_targets = {0.3};
  const auto single = run_simulation(c);
  EXPECT_EQ(single.cells[0].sd_beta0, a.cells[3].sd_beta0);
}

TEST(RunSimulation, CellContents) {
  auto c = small_config();
  c.betas = {-0.44};
  const auto t = run_simulation(c);
  ASSERT_EQ(t.cells.size(), 1u);
  const auto& cell = t.cells[0];
  EXPECT_EQ(cell.n_completed, 12u);
  EXPECT_EQ(cell.n_failed, 0u);
  EXPECT_FALSE(cell.failed);
  EXPECT_EQ(cell.root_bound_violations, 0u);
  EXPECT_NEAR(cell.true_beta0, std::log(true_median_inactivity(0.2, 2.0, -0.44, 0.0, 15.0)), 1e-15);
  EXPECT_NEAR(cell.true_theta1 - cell.true_theta0, -1.0, 0.06);
  EXPECT_GT(cell.sd_beta1, 0.0);
  EXPECT_GT(cell.ase_beta1, 0.0);
  EXPECT_GE(cell.rejection_rate, 0.0);
  EXPECT_LE(cell.rejection_rate, 1.0);
  EXPECT_GE(cell.global_rejection_rate, 0.0);
  EXPECT_LE(cell.global_rejection_rate, 1.0);
}

TEST(RunSimulation, FailingCellIsFlagged) {
  auto c = small_config();
  c.t0_list = {0.5};  // almost no events before t0
  const auto t = run_simulation(c);
  EXPECT_TRUE(t.cells[0].failed);
  EXPECT_EQ(t.cells[0].n_failed, 12u);
  EXPECT_FALSE(t.cells[0].failure_messages.empty());
}

TEST(RunSimulation, ConfigValidation) {
  auto c = small_config();
  c.n_sims = 0;
  EXPECT_THROW(run_simulation(c), Error);
  c = small_config();
  c.n_perturb = 1;
  EXPECT_THROW(run_simulation(c), Error);
  c = small_config();
  c.censoring_targets = {1.0};
  EXPECT_THROW(run_simulation(c), Error);
}

TEST(RunPowerStudy, DefaultAlternatives) {
  auto c = small_config();
  c.n_sims = 2;
  c.n_perturb = 5;
  c.global_test = false;
  const auto t = run_power_study(c);
  ASSERT_EQ(t.cells.size(), 4u);
  EXPECT_EQ(t.cells[0].hazard_beta, 0.0);
  EXPECT_EQ(t.cells[3].hazard_beta, -1.18);
  EXPECT_TRUE(std::isnan(t.cells[0].global_rejection_rate));
}

TEST(Truth, EvaluatesQuickly) {
  const auto start = std::chrono::steady_clock::now();
  volatile double sink = 0.0;
  for (int i = 0; i < 1000; ++i) sink = sink + true_median_inactivity(0.2, 2.0, 0.0, 0.0, 15.0);
  const auto elapsed = std::chrono::steady_clock::now() - start;
  EXPECT_LT(std::chrono::duration<double>(elapsed).count(), 1e-3 * 1000);
}
