#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "inactivity/core.hpp"
#include "inactivity/simulate.hpp"

using namespace inactivity;

namespace {

Dataset load(const std::string& text, std::vector<std::string> covariates = {"z"}) {
  std::istringstream in(text);
  return load_dataset(in, "time", "status", covariates);
}

Dataset events_at(std::vector<double> times, std::vector<int> status) {
  std::vector<SurvivalRecord> records;
  for (std::size_t i = 0; i < times.size(); ++i) records.push_back({times[i], status[i], {}});
  return Dataset(std::move(records), {});
}

}  // namespace

TEST(LoadDataset, ParsesSmallFile) {
  const auto d = load("time,status,z\n1.0,1,0\n2.5,0,1");
  ASSERT_EQ(d.n(), 2u);
  EXPECT_EQ(d.p(), 1u);
  EXPECT_EQ(d[0], (SurvivalRecord{1.0, 1, {0.0}}));
  EXPECT_EQ(d[1], (SurvivalRecord{2.5, 0, {1.0}}));
  EXPECT_EQ(d.covariate_names(), std::vector<std::string>{"z"});
}

TEST(LoadDataset, BadStatusReportsRowColumnToken) {
  try {
    load("time,status,z\n1.0,1,0\n2.0,2,1\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 3u);
    EXPECT_EQ(e.column(), "status");
    EXPECT_EQ(e.token(), "2");
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
  }
}

TEST(LoadDataset, ColumnOrderAndExtraColumnsAreIrrelevant) {
  const auto d = load("id,size,status,node,time,age\n7,0.5,1,1,3.25,0.3\n8,0.1,0,0,9,0.6\n", {"node", "age", "size"});
  ASSERT_EQ(d.p(), 3u);
  EXPECT_EQ(d[0], (SurvivalRecord{3.25, 1, {1.0, 0.3, 0.5}}));
  EXPECT_EQ(d[1], (SurvivalRecord{9.0, 0, {0.0, 0.6, 0.1}}));
}

TEST(LoadDataset, Errors) {
  auto code_of = [](const std::string& text) {
    try {
      load(text);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  EXPECT_EQ(code_of("time,status\n1,1\n"), ErrorCode::MissingColumn);
  EXPECT_EQ(code_of("time,status,z\n"), ErrorCode::EmptyDataset);
  EXPECT_EQ(code_of(""), ErrorCode::EmptyDataset);
  EXPECT_EQ(code_of("time,status,z\n1,1\n"), ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of("time,status,z\n1,1,abc\n"), ErrorCode::ParseError);
  EXPECT_EQ(code_of("time,status,z\n1,1,\n"), ErrorCode::ParseError);
  EXPECT_EQ(code_of("time,status,z\n-1,1,0\n"), ErrorCode::ParseError);
  EXPECT_EQ(code_of("time,status,z\nnan,1,0\n"), ErrorCode::ParseError);
  EXPECT_EQ(code_of("time,status,z\n1,1,inf\n"), ErrorCode::ParseError);
}

TEST(LoadDataset, ToleratesBomWhitespaceCrlfAndBlankLines) {
  const auto d = load("\xEF\xBB\xBFtime, status ,z\r\n 1.5 ,1, 2\r\n\r\n3,0,-1e-2\r\n");
  ASSERT_EQ(d.n(), 2u);
  EXPECT_EQ(d[0], (SurvivalRecord{1.5, 1, {2.0}}));
  EXPECT_EQ(d[1], (SurvivalRecord{3.0, 0, {-0.01}}));
}

TEST(LoadDataset, RoundTripIsExact) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 30.0);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<SurvivalRecord> records;
    for (int i = 0; i < 50; ++i)
      records.push_back({u(rng), static_cast<int>(rng() % 2), {normal(rng), normal(rng) * 1e-7, 1e300 * normal(rng)}});
    const Dataset original(std::move(records), {"a", "b", "c"});
    std::ostringstream out;
    write_csv(original, out);
    EXPECT_EQ(load(out.str(), {"a", "b", "c"}), original);
  }
}

TEST(DatasetInvariants, RejectsMalformedRecords) {
  EXPECT_THROW(Dataset({{1.0, 1, {0.0}}}, {"z", "z"}), Error);
  EXPECT_THROW(Dataset({{1.0, 1, {0.0}}}, {""}), Error);
  EXPECT_THROW(Dataset({{1.0, 1, {}}}, {"z"}), Error);
  EXPECT_THROW(Dataset({{-1.0, 1, {0.0}}}, {"z"}), Error);
  EXPECT_THROW(Dataset({{1.0, 2, {0.0}}}, {"z"}), Error);
  EXPECT_THROW(Dataset({{1.0, 1, {std::nan("")}}}, {"z"}), Error);
}

TEST(Validate, CountsEventsBeforeT0) {
  const auto d = events_at({1, 2, 3}, {1, 1, 1});
  ModelConfig config{2.5};
  const auto r = validate(d, config);
  EXPECT_EQ(r.events_before_t0, 2u);
  EXPECT_EQ(r.censoring_proportion, 0.0);
  EXPECT_EQ(r.max_time, 3.0);
  EXPECT_TRUE(r.largest_time_is_event);
  EXPECT_TRUE(r.insufficient_events);
  config.min_events = 2;
  EXPECT_TRUE(validate(d, config).ok());
}

TEST(Validate, AllCensoredIsInsufficient) {
  const auto r = validate(events_at({1, 2, 3}, {0, 0, 0}), ModelConfig{10.0});
  EXPECT_EQ(r.events_before_t0, 0u);
  EXPECT_TRUE(r.insufficient_events);
  EXPECT_EQ(r.censoring_proportion, 1.0);
  EXPECT_FALSE(r.largest_time_is_event);
}

TEST(Validate, StrictInequalityAtT0AndFlags) {
  const auto d = events_at({2.5, 1.0, 4.0, 4.0}, {1, 1, 1, 0});
  ModelConfig config{2.5, 0.5, 5.0, 1};
  const auto r = validate(d, config);
  EXPECT_EQ(r.events_before_t0, 1u);
  EXPECT_FALSE(r.largest_time_is_event);
  EXPECT_TRUE(r.truncation_out_of_range);
  EXPECT_FALSE(r.too_few_records);
  EXPECT_TRUE(validate(events_at({1}, {1}), ModelConfig{2.0, 0.5, {}, 1}).too_few_records);
}

TEST(Validate, IsPureAndMatchesDirectCount) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  std::vector<SurvivalRecord> records;
  for (int i = 0; i < 300; ++i) records.push_back({u(rng), static_cast<int>(rng() % 2), {}});
  const Dataset d(records, {});
  const ModelConfig config{11.0};
  const auto first = validate(d, config);
  EXPECT_EQ(first, validate(d, config));
  std::size_t count = 0;
  for (const auto& r : records) count += (r.time < 11.0 && r.status == 1) ? 1 : 0;
  EXPECT_EQ(first.events_before_t0, count);
}

TEST(Validate, SimulatedCensoringNearTarget) {
  WeibullPHSpec spec;
  const auto interval = calibrate_censoring_interval(spec, 0.30);
  KeyedStream rng(derive_key({2024, 30}));
  const auto d = simulate_dataset(spec, interval, rng);
  const auto r = validate(d, ModelConfig{15.0});
  EXPECT_EQ(r.n, 400u);
  EXPECT_GE(r.censoring_proportion, 0.25);
  EXPECT_LE(r.censoring_proportion, 0.35);
}

TEST(ModelConfigCheck, RejectsOutOfRangeValues) {
  EXPECT_THROW(check_config(ModelConfig{0.0}), Error);
  EXPECT_THROW(check_config(ModelConfig{15.0, 1.5}), Error);
  EXPECT_THROW(check_config(ModelConfig{15.0, 0.0}), Error);
  EXPECT_THROW(check_config(ModelConfig{15.0, 0.5, -1.0}), Error);
  try {
    check_config(ModelConfig{15.0, 1.5});
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("quantile must be in (0,1)"), std::string::npos);
  }
}
