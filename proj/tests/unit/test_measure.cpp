#include <gtest/gtest.h>

#include <cmath>

#include "expect.hpp"
#include "fixtures.hpp"
#include "udss/bench.hpp"

namespace {

using namespace udss::testing;
using udss::Errc;
using udss::LayerEntry;


class MeasureTest : public ::testing::Test {
 protected:
  void SetUp() override {
    auto report = udss::probe_support();
    if (!report.user_namespaces) GTEST_SKIP() << "user namespaces unavailable: " << report.detail;
    // One argv runs on both sides: the host directory holding the workload is
    // bound at the same path inside the container. Both sides then execute
    // the very same file; separate copies of a binary can differ by a few
    // percent in speed from page placement alone. It stays out of $HOME,
    // which the runtime binds over the image.
    box_ = work_ / "bin" / "fixturebox";
    fs::create_directories(box_.parent_path());
    fs::copy_file(UDSS_FIXTUREBOX, box_);
  }

  std::vector<LayerEntry> host_path_layer(std::vector<LayerEntry> extra) const {
    extra.push_back(dir_entry(box_.parent_path().relative_path().string()));
    return extra;
  }

  udss::ContainerSpec spec_for(const std::string& name, std::vector<LayerEntry> extra = {}) {
    udss::ContainerSpec s;
    s.rootfs = install_image(runnable_fixture(UDSS_FIXTUREBOX, name, host_path_layer(std::move(extra))),
                             work_ / name);
    s.binds = {udss::parse_bind(box_.parent_path().string())};
    return s;
  }

  std::vector<std::string> workload(const std::string& items = "60000") const {
    return {box_.string(), "workload", items};
  }

  // Median delta over independent pairs: a shared host drifts by a few
  // percent over seconds, which one non-interleaved pair cannot cancel.
  double median_delta(const udss::ContainerSpec& spec, int pairs = 3) const {
    std::vector<double> deltas;
    for (int i = 0; i < pairs; ++i) {
      auto rec = udss::measure_pair(workload(), spec, 5);
      deltas.push_back(*udss::overhead_report({rec}).rows[0].throughput_delta);
    }
    return udss::median(deltas);
  }

  TempDir work_{"udss-measure"};
  fs::path box_;
};

TEST_F(MeasureTest, SameWorkloadBothSides) {
  auto spec = spec_for("same");
  auto rec = udss::measure_pair(workload("2000"), spec, 1);
  EXPECT_EQ(rec.benchmark_name, "fixturebox");
  ASSERT_TRUE(rec.throughput_with && rec.throughput_without);
  ASSERT_TRUE(rec.free_mem_with_gb && rec.free_mem_without_gb);
  EXPECT_GT(*rec.free_mem_with_gb, 0);
  EXPECT_LT(std::abs(median_delta(spec)), 0.05);
}

TEST_F(MeasureTest, InjectedSlowdownDetected) {
  // Every work item costs 1.25x inside this image: throughput falls by 20%.
  auto spec = spec_for("slow", {file_entry("etc/fixture-slowdown", "1.25\n")});
  udss::MeasureOptions opts;
  opts.benchmark_name = "slowed";
  auto rec = udss::measure_pair(workload("2000"), spec, 1, opts);
  EXPECT_EQ(rec.benchmark_name, "slowed");
  auto d = median_delta(spec);
  EXPECT_GE(d, -0.22);
  EXPECT_LE(d, -0.18);
  EXPECT_GT(std::abs(d), udss::kDefaultOverheadThreshold);
}

TEST_F(MeasureTest, ContainerFailureReported) {
  // Present on the host, absent from the image.
  auto spec = spec_for("fail");
  TempDir host;
  auto host_only = host / "fixturebox";
  fs::copy_file(UDSS_FIXTUREBOX, host_only);
  try {
    udss::measure_pair({host_only.string(), "workload", "100"}, spec, 1);
    FAIL() << "expected an error";
  } catch (const udss::Error& e) {
    EXPECT_EQ(e.code(), Errc::ExecNotFound) << e.what();
  }

  try {
    udss::measure_pair({box_.string(), "exit", "3"}, spec, 1);
    FAIL() << "expected WorkloadFailed";
  } catch (const udss::WorkloadError& e) {
    EXPECT_EQ(e.code(), Errc::WorkloadFailed);
    EXPECT_EQ(e.exit_status(), 3);
    EXPECT_FALSE(e.containerized());
  }
}

TEST_F(MeasureTest, ContainerOnlyFailureCarriesStatus) {
  // The slowdown file holds garbage inside the image only; the workload exits 4 there.
  auto spec = spec_for("bad", {file_entry("etc/fixture-slowdown", "not-a-number\n")});
  try {
    udss::measure_pair(workload("100"), spec, 1);
    FAIL() << "expected WorkloadFailed";
  } catch (const udss::WorkloadError& e) {
    EXPECT_EQ(e.code(), Errc::WorkloadFailed);
    EXPECT_EQ(e.exit_status(), 4);
    EXPECT_TRUE(e.containerized());
  }
}

TEST_F(MeasureTest, PatternMiss) {
  auto spec = spec_for("miss");
  EXPECT_ERRC(udss::measure_pair({box_.string(), "echo", "no numbers"}, spec, 1), Errc::PatternNotFound);
}

TEST(Measure, Preconditions) {
  udss::ContainerSpec spec;
  spec.rootfs = "/";
  EXPECT_ERRC(udss::measure_pair({}, spec, 1), Errc::InvalidConfig);
  EXPECT_ERRC(udss::measure_pair({"/bin/true"}, spec, 0), Errc::InvalidConfig);
}

}  // namespace
