#include <gtest/gtest.h>

#include <random>

#include "inactivity/km.hpp"
#include "support/oracles.hpp"

using namespace inactivity;

namespace {

Dataset make(std::vector<double> times, std::vector<int> status) {
  std::vector<SurvivalRecord> records;
  for (std::size_t i = 0; i < times.size(); ++i) records.push_back({times[i], status[i], {}});
  return Dataset(std::move(records), {});
}

// (1, censored), (2, event), (3, censored)
Dataset three_records() { return make({1, 2, 3}, {0, 1, 0}); }

}  // namespace

TEST(StepFunction, LeftLimitConvention) {
  const StepFunction f({2.0}, {0.5});
  EXPECT_EQ(evaluate(f, 0.0), 1.0);
  EXPECT_EQ(evaluate(f, 2.0), 1.0);
  EXPECT_EQ(evaluate(f, 2.01), 0.5);
  EXPECT_EQ(f(100.0), 0.5);
  EXPECT_EQ(evaluate(StepFunction{}, 3.0), 1.0);
}

TEST(StepFunction, RejectsInvalidShapes) {
  EXPECT_THROW(StepFunction({1.0, 1.0}, {0.5, 0.4}), Error);
  EXPECT_THROW(StepFunction({1.0, 2.0}, {0.5, 0.6}), Error);
  EXPECT_THROW(StepFunction({1.0}, {1.5}), Error);
  EXPECT_THROW(StepFunction({-1.0}, {0.5}), Error);
  EXPECT_THROW(StepFunction({1.0}, {}), Error);
}

TEST(CensoringKM, NoCensoringIsIdentityOne) {
  const auto g = fit_censoring_km(make({1, 2, 3, 5}, {1, 1, 1, 1}));
  EXPECT_TRUE(g.jump_times().empty());
  for (double t : {0.0, 1.0, 2.5, 5.0}) EXPECT_EQ(g(t), 1.0);
}

TEST(CensoringKM, ThreeRecordHandCalculation) {
  const auto g = fit_censoring_km(three_records());
  EXPECT_EQ(g(0.0), 1.0);
  EXPECT_EQ(g(1.0), 1.0);
  EXPECT_DOUBLE_EQ(g(1.5), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(g(2.0), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(g(3.0), 2.0 / 3.0);
  EXPECT_EQ(g(3.0 + 1e-9), 0.0);
}

TEST(CensoringKM, SingleCensoredRecord) {
  const auto g = fit_censoring_km(make({5}, {0}));
  EXPECT_EQ(g(0.0), 1.0);
  EXPECT_EQ(g(5.0), 1.0);
  EXPECT_EQ(g(5.0 + 1e-12), 0.0);
}

TEST(CensoringKM, EventsLeaveRiskSetFirstAtTies) {
  // At t = 2 one event and one censoring tie: the censoring sees 2 at risk.
  const auto g = fit_censoring_km(make({1, 2, 2, 4}, {1, 1, 0, 1}));
  EXPECT_DOUBLE_EQ(g(2.5), 0.5);
}

TEST(WeightedCensoringKM, UnitWeightsAndScaling) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::uniform_real_distribution<double> w(0.1, 5.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> t;
    std::vector<int> s;
    for (int i = 0; i < 40; ++i) {
      t.push_back(rep % 2 ? std::round(u(rng)) : u(rng));
      s.push_back(static_cast<int>(rng() % 2));
    }
    const auto d = make(t, s);
    const auto g = fit_censoring_km(d);
    EXPECT_EQ(fit_weighted_censoring_km(d, std::vector<double>(d.n(), 1.0)), g);
    EXPECT_EQ(fit_weighted_censoring_km(d, std::vector<double>(d.n(), 2.0)), g);

    std::vector<double> xi(d.n());
    for (auto& x : xi) x = w(rng);
    std::vector<double> scaled = xi;
    for (auto& x : scaled) x *= 3.7;
    const auto a = fit_weighted_censoring_km(d, xi);
    const auto b = fit_weighted_censoring_km(d, scaled);
    ASSERT_EQ(a.jump_times(), b.jump_times());
    for (std::size_t k = 0; k < a.values().size(); ++k) EXPECT_NEAR(a.values()[k], b.values()[k], 1e-12);
  }
}

TEST(WeightedCensoringKM, ThreeRecordHandCalculation) {
  const std::vector<double> xi{2.0, 1.0, 1.0};
  const auto g = fit_weighted_censoring_km(three_records(), xi);
  EXPECT_DOUBLE_EQ(g(1.5), 0.5);
  EXPECT_DOUBLE_EQ(g(2.0), 0.5);
  EXPECT_EQ(g(4.0), 0.0);
}

TEST(WeightedCensoringKM, InputErrors) {
  const auto d = three_records();
  auto code_of = [&](std::vector<double> xi) {
    try {
      fit_weighted_censoring_km(d, xi);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  EXPECT_EQ(code_of({1.0, 0.0, 1.0}), ErrorCode::NonPositiveWeight);
  EXPECT_EQ(code_of({1.0, -1.0, 1.0}), ErrorCode::NonPositiveWeight);
  EXPECT_EQ(code_of({1.0, 1.0}), ErrorCode::LengthMismatch);
  EXPECT_THROW(fit_censoring_km(Dataset{}), Error);
}

TEST(CensoringKM, MatchesDirectDefinitionAndIsMonotone) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> w(0.2, 4.0);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 3 + static_cast<int>(rng() % 30);
    std::vector<double> t;
    std::vector<int> s;
    std::vector<double> xi;
    for (int i = 0; i < n; ++i) {
      t.push_back(static_cast<double>(rng() % 12));
      s.push_back(static_cast<int>(rng() % 2));
      xi.push_back(w(rng));
    }
    const auto d = make(t, s);
    const auto g = fit_weighted_censoring_km(d, xi);
    double previous = 1.0;
    for (double q = 0.0; q <= 13.0; q += 0.25) {
      const double value = g(q);
      EXPECT_NEAR(value, oracle::censoring_km_left_limit(t, s, xi, q), 1e-12) << "t=" << q;
      EXPECT_LE(value, previous);
      previous = value;
    }
  }
}

TEST(CensoringKM, CensoringOnlyGivesEmpiricalSurvival) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::vector<double> t(60);
  for (auto& x : t) x = u(rng);
  const auto g = fit_censoring_km(make(t, std::vector<int>(t.size(), 0)));
  for (double q : t) {
    double at_least = 0.0;
    for (double x : t) at_least += x >= q ? 1.0 : 0.0;
    EXPECT_NEAR(g(q), at_least / 60.0, 1e-12);
  }
}

TEST(Truncation, OnlyCensoredTimesAboveBoundMove) {
  const auto d = make({1, 5, 7, 9}, {0, 1, 0, 1});
  EXPECT_EQ(truncated_censoring_times(d, 6.0), (std::vector<double>{1, 5, 6, 9}));
}
