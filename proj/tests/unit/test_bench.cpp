#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "expect.hpp"
#include "udss/bench.hpp"

namespace {

using udss::Errc;
using udss::OverheadRecord;
using udss::ScalingRecord;

// Epoch times of the 4/8/16/32-node TensorFlow runs.
const std::vector<ScalingRecord> kEpochTimes = {{4, 3806}, {8, 1910}, {16, 1001}, {32, 504}};

TEST(Scaling, EpochTimeSeries) {
  auto r = udss::scaling_report(kEpochTimes, 4u);
  ASSERT_EQ(r.rows.size(), 4u);
  // Oracle: speedup and efficiency as exact ratios of integers.
  const double speedup[] = {1.0, 3806.0 / 1910.0, 3806.0 / 1001.0, 3806.0 / 504.0};
  const double efficiency[] = {1.0, 3806.0 * 4 / (1910.0 * 8), 3806.0 * 4 / (1001.0 * 16),
                               3806.0 * 4 / (504.0 * 32)};
  const double rounded[] = {1.0, 0.9963, 0.9505, 0.9440};
  for (int i = 0; i < 4; ++i) {
    SCOPED_TRACE(r.rows[i].nodes);
    EXPECT_NEAR(r.rows[i].speedup, speedup[i], 1e-12);
    EXPECT_NEAR(r.rows[i].efficiency, efficiency[i], 1e-12);
    EXPECT_NEAR(r.rows[i].efficiency, rounded[i], 1e-3);
  }
  EXPECT_NEAR(r.rows[1].speedup, 1.9927, 1e-4);
  EXPECT_NEAR(r.rows[3].speedup, 7.5516, 1e-4);
}

TEST(Scaling, BaselineDefaultsToSmallest) {
  std::vector<ScalingRecord> shuffled = {{32, 504}, {8, 1910}, {4, 3806}, {16, 1001}};
  EXPECT_EQ(udss::scaling_report(shuffled), udss::scaling_report(kEpochTimes, 4u));
}

TEST(Scaling, SinglePoint) {
  auto r = udss::scaling_report({{4, 3806}}, 4u);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].speedup, 1.0);
  EXPECT_EQ(r.rows[0].efficiency, 1.0);
}

TEST(Scaling, Errors) {
  EXPECT_ERRC(udss::scaling_report({{8, 1910}, {16, 1001}}, 4u), Errc::MissingBaseline);
  EXPECT_ERRC(udss::scaling_report({{4, 3806}, {4, 3800}}), Errc::DuplicateNodeCount);
  EXPECT_ERRC(udss::scaling_report({{4, 0}}), Errc::InvalidRecord);
  EXPECT_ERRC(udss::scaling_report({{0, 10}}), Errc::InvalidRecord);
  EXPECT_ERRC(udss::scaling_report({{4, -1}}), Errc::InvalidRecord);
  EXPECT_ERRC(udss::scaling_report({}), Errc::NoMeasurements);
}

std::vector<ScalingRecord> random_series(std::mt19937& rng) {
  std::vector<ScalingRecord> s;
  std::vector<unsigned> nodes;
  std::uniform_int_distribution<unsigned> n(1, 512);
  std::uniform_real_distribution<double> t(0.5, 1e5);
  int count = std::uniform_int_distribution<int>(1, 8)(rng);
  while (static_cast<int>(s.size()) < count) {
    unsigned k = n(rng);
    if (std::find(nodes.begin(), nodes.end(), k) != nodes.end()) continue;
    nodes.push_back(k);
    s.push_back({k, t(rng)});
  }
  return s;
}

TEST(ScalingProperty, Invariants) {
  std::mt19937 rng(1234);
  for (int i = 0; i < 300; ++i) {
    auto series = random_series(rng);
    auto r = udss::scaling_report(series);
    SCOPED_TRACE(i);
    ASSERT_EQ(r.rows.size(), series.size());
    for (std::size_t j = 0; j < r.rows.size(); ++j) {
      const auto& row = r.rows[j];
      if (j > 0) EXPECT_LT(r.rows[j - 1].nodes, row.nodes);
      if (row.nodes == r.baseline_nodes) {
        EXPECT_EQ(row.speedup, 1.0);
        EXPECT_EQ(row.efficiency, 1.0);
      }
      EXPECT_NEAR(row.efficiency, row.speedup / row.linear_speedup, 1e-12);
      EXPECT_NEAR(row.linear_speedup, double(row.nodes) / r.baseline_nodes, 1e-12);
    }
    // Efficiency is invariant under rescaling all times.
    double k = std::uniform_real_distribution<double>(0.01, 100)(rng);
    auto scaled = series;
    for (auto& rec : scaled) rec.epoch_time_s *= k;
    auto rs = udss::scaling_report(scaled);
    for (std::size_t j = 0; j < r.rows.size(); ++j) {
      EXPECT_NEAR(rs.rows[j].efficiency, r.rows[j].efficiency, 1e-9 * r.rows[j].efficiency);
    }
    // Perfectly linear series have efficiency exactly 1 within rounding.
    auto linear = series;
    for (auto& rec : linear) rec.epoch_time_s = 1e4 / rec.nodes;
    for (const auto& row : udss::scaling_report(linear).rows) EXPECT_NEAR(row.efficiency, 1.0, 1e-12);
  }
}

TEST(ScalingIo, RoundTrips) {
  std::mt19937 rng(99);
  for (int i = 0; i < 50; ++i) {
    auto r = udss::scaling_report(random_series(rng));
    EXPECT_EQ(udss::scaling_report_from_csv(udss::to_csv(r)), r);
    EXPECT_EQ(udss::scaling_report_from_json(udss::to_json(r)), r);
  }
}

TEST(ScalingIo, ParseInput) {
  auto s = udss::parse_scaling_csv("# epoch times\nnodes,epoch_time_s\n4,3806\n8,1910\r\n\n16,1001\n32,504\n");
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s[2].nodes, 16u);
  EXPECT_EQ(s[3].epoch_time_s, 504);
  auto swapped = udss::parse_scaling_csv("epoch_time_s,nodes\n3806,4\n");
  EXPECT_EQ(swapped[0].nodes, 4u);
  EXPECT_ERRC(udss::parse_scaling_csv("nodes,time\n4,1\n"), Errc::InvalidRecord);
  EXPECT_ERRC(udss::parse_scaling_csv("nodes,epoch_time_s\nfour,1\n"), Errc::InvalidRecord);
  EXPECT_ERRC(udss::parse_scaling_csv("nodes,epoch_time_s\n4\n"), Errc::InvalidRecord);
}

TEST(ScalingIo, PlotData) {
  auto plot = udss::plot_data_csv(udss::scaling_report({{4, 100}, {8, 50}}));
  EXPECT_EQ(plot, "nodes,measured_speedup,linear_speedup\n4,1,1\n8,2,2\n");
}

// ------------------------------------------------------------------ overhead

std::vector<OverheadRecord> tf_records() {
  return {{"AlexNet", 1968, 1973, 331.29, 331.33}, {"ResNet-50", 75, 74, 324.47, 324.89}};
}

TEST(Overhead, ThroughputAndMemory) {
  auto r = udss::overhead_report(tf_records());
  ASSERT_EQ(r.rows.size(), 2u);
  // Oracle: exact integer ratios (1968-1973)/1973 = -5/1973 and (75-74)/74 = 1/74.
  EXPECT_NEAR(*r.rows[0].throughput_delta, -5.0 / 1973.0, 1e-15);
  EXPECT_NEAR(*r.rows[1].throughput_delta, 1.0 / 74.0, 1e-15);
  EXPECT_NEAR(*r.rows[0].throughput_delta, -0.0025, 1e-3 * 0.0025 + 1e-4);
  EXPECT_NEAR(*r.rows[1].throughput_delta, 0.0135, 1e-3 * 0.0135 + 1e-4);
  EXPECT_NEAR(*r.rows[0].mem_delta_gb, 0.04, 0.04 * 1e-3);
  EXPECT_NEAR(*r.rows[1].mem_delta_gb, 0.42, 0.42 * 1e-3);
  EXPECT_FALSE(r.rows[0].significant);
  EXPECT_FALSE(r.rows[1].significant);
  EXPECT_FALSE(r.any_significant());
  EXPECT_EQ(r.threshold, 0.02);
}

TEST(Overhead, ThresholdIsConfigurable) {
  auto r = udss::overhead_report(tf_records(), 0.01);
  EXPECT_FALSE(r.rows[0].significant);
  EXPECT_TRUE(r.rows[1].significant);
  EXPECT_TRUE(r.any_significant());
}

TEST(Overhead, PartialRecords) {
  std::vector<OverheadRecord> recs = {{"tp-only", 10, 10, std::nullopt, std::nullopt},
                                      {"mem-only", std::nullopt, std::nullopt, 5, 6},
                                      {"half", 10, std::nullopt, 1, std::nullopt}};
  auto r = udss::overhead_report(recs);
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_EQ(r.rows[0].throughput_delta, 0.0);
  EXPECT_FALSE(r.rows[0].mem_delta_gb);
  EXPECT_FALSE(r.rows[1].throughput_delta);
  EXPECT_EQ(r.rows[1].mem_delta_gb, 1.0);
  EXPECT_FALSE(r.rows[2].throughput_delta);
  EXPECT_FALSE(r.rows[2].mem_delta_gb);
}

TEST(Overhead, Errors) {
  EXPECT_ERRC(udss::overhead_report({}), Errc::NoMeasurements);
  EXPECT_ERRC(udss::overhead_report({{"x", 10, std::nullopt, std::nullopt, 3}}), Errc::NoMeasurements);
  EXPECT_ERRC(udss::overhead_report({{"x", 10, 0, std::nullopt, std::nullopt}}), Errc::InvalidRecord);
  EXPECT_ERRC(udss::overhead_report({{"x", -1, 10, std::nullopt, std::nullopt}}), Errc::InvalidRecord);
  EXPECT_ERRC(udss::overhead_report({{"x", 1, 1, -2, 1}}), Errc::InvalidRecord);
}

TEST(OverheadProperty, SwappingSidesInvertsDelta) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> tp(0.1, 1e5);
  std::uniform_real_distribution<double> mem(0, 1e3);
  for (int i = 0; i < 500; ++i) {
    OverheadRecord rec{"b", tp(rng), tp(rng), mem(rng), mem(rng)};
    OverheadRecord swapped{"b", rec.throughput_without, rec.throughput_with, rec.free_mem_without_gb,
                           rec.free_mem_with_gb};
    double d = *udss::overhead_report({rec}).rows[0].throughput_delta;
    double ds = *udss::overhead_report({swapped}).rows[0].throughput_delta;
    EXPECT_NEAR(ds, -d / (1 + d), 1e-9 * (1 + std::abs(ds)));
    EXPECT_NEAR(*udss::overhead_report({rec}).rows[0].mem_delta_gb,
                -*udss::overhead_report({swapped}).rows[0].mem_delta_gb, 1e-9);
    // Identical sides never register overhead.
    OverheadRecord same{"b", rec.throughput_with, rec.throughput_with, 1, 1};
    auto row = udss::overhead_report({same}).rows[0];
    EXPECT_EQ(*row.throughput_delta, 0.0);
    EXPECT_FALSE(row.significant);
  }
}

TEST(OverheadIo, RoundTrips) {
  auto r = udss::overhead_report(tf_records());
  EXPECT_EQ(udss::overhead_report_from_csv(udss::to_csv(r)), r);
  EXPECT_EQ(udss::overhead_report_from_json(udss::to_json(r)), r);
  auto partial = udss::overhead_report({{"a,b \"q\"", 3, 4, std::nullopt, std::nullopt},
                                        {"m", std::nullopt, std::nullopt, 1.5, 2.25}},
                                       0.3);
  EXPECT_EQ(udss::overhead_report_from_csv(udss::to_csv(partial)), partial);
  EXPECT_EQ(udss::overhead_report_from_json(udss::to_json(partial)), partial);
}

TEST(OverheadIo, RecordsRoundTripThroughInputFormat) {
  auto recs = tf_records();
  recs.push_back({"partial", std::nullopt, 12.5, std::nullopt, 3});
  EXPECT_EQ(udss::parse_overhead_csv(udss::to_csv(recs)), recs);
}

TEST(OverheadIo, ParseInput) {
  auto recs = udss::parse_overhead_csv(
      "benchmark,tp_with,tp_without,mem_with,mem_without\n"
      "AlexNet,1968,1973,331.29,331.33\n"
      "\"ResNet-50\",75,74,,\n");
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0], tf_records()[0]);
  EXPECT_EQ(recs[1].benchmark_name, "ResNet-50");
  EXPECT_FALSE(recs[1].free_mem_with_gb);
  EXPECT_ERRC(udss::parse_overhead_csv("benchmark,tp_with\nx,1\n"), Errc::InvalidRecord);
  EXPECT_ERRC(udss::parse_overhead_csv("benchmark,tp_with,tp_without,mem_with,mem_without\nx,abc,1,,\n"),
              Errc::InvalidRecord);
}

TEST(Median, Values) {
  EXPECT_EQ(udss::median({3}), 3);
  EXPECT_EQ(udss::median({5, 1, 3}), 3);
  EXPECT_EQ(udss::median({4, 1, 3, 2}), 2.5);
}

TEST(Throughput, Extraction) {
  EXPECT_EQ(udss::extract_throughput("throughput: 1000 img/s\n", std::string(udss::kDefaultThroughputPattern)),
            1000);
  EXPECT_EQ(udss::extract_throughput("10 images/s\nwarmup\n total 12.5 images/s\n",
                                     std::string(udss::kDefaultThroughputPattern)),
            12.5);
  EXPECT_EQ(udss::extract_throughput("rate=3.5e2 samples/s", std::string(udss::kDefaultThroughputPattern)), 350);
  EXPECT_EQ(udss::extract_throughput("total images/sec: 74.52", R"(images/sec: ([0-9.]+))"), 74.52);
  EXPECT_ERRC(udss::extract_throughput("nothing here", std::string(udss::kDefaultThroughputPattern)),
              Errc::PatternNotFound);
  EXPECT_ERRC(udss::extract_throughput("1 img/s", "img/s"), Errc::InvalidConfig);
  EXPECT_ERRC(udss::extract_throughput("1 img/s", "([0-9"), Errc::InvalidConfig);
}

}  // namespace
