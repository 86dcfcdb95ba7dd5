#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "udss/runtime.hpp"

namespace udss {

// ------------------------------------------------------------------ scaling

struct ScalingRecord {
  unsigned nodes = 0;
  double epoch_time_s = 0;
};

struct ScalingRow {
  unsigned nodes = 0;
  double epoch_time_s = 0;
  double speedup = 0;         // T(baseline) / T(n)
  double efficiency = 0;      // speedup / (n / baseline)
  double linear_speedup = 0;  // n / baseline, the ideal reference line

  friend bool operator==(const ScalingRow&, const ScalingRow&) = default;
};

struct ScalingReport {
  unsigned baseline_nodes = 0;
  std::vector<ScalingRow> rows;  // ascending node count

  friend bool operator==(const ScalingReport&, const ScalingReport&) = default;
};

// Baseline defaults to the smallest node count. Throws MissingBaseline,
// DuplicateNodeCount, InvalidRecord (non-positive values) or NoMeasurements.
ScalingReport scaling_report(std::vector<ScalingRecord> series,
                             std::optional<unsigned> baseline_nodes = std::nullopt);

// ----------------------------------------------------------------- overhead

struct OverheadRecord {
  std::string benchmark_name;
  std::optional<double> throughput_with;     // images/s
  std::optional<double> throughput_without;  // images/s
  std::optional<double> free_mem_with_gb;
  std::optional<double> free_mem_without_gb;

  friend bool operator==(const OverheadRecord&, const OverheadRecord&) = default;
};

struct OverheadRow {
  std::string benchmark_name;
  std::optional<double> throughput_delta;  // (with - without) / without
  std::optional<double> mem_delta_gb;      // free_without - free_with
  bool significant = false;                // |throughput_delta| > threshold

  friend bool operator==(const OverheadRow&, const OverheadRow&) = default;
};

struct OverheadReport {
  double threshold = 0.02;
  std::vector<OverheadRow> rows;

  bool any_significant() const noexcept;
  friend bool operator==(const OverheadReport&, const OverheadReport&) = default;
};

inline constexpr double kDefaultOverheadThreshold = 0.02;

// Throws NoMeasurements when no record carries a complete pair, and
// InvalidRecord for negative values or a zero native throughput.
OverheadReport overhead_report(const std::vector<OverheadRecord>& records,
                               double threshold = kDefaultOverheadThreshold);

// --------------------------------------------------------------------- I/O

// Input CSV with header "nodes,epoch_time_s".
std::vector<ScalingRecord> parse_scaling_csv(std::string_view text);
// Input CSV with header "benchmark,tp_with,tp_without,mem_with,mem_without";
// empty cells mean "not measured".
std::vector<OverheadRecord> parse_overhead_csv(std::string_view text);

std::string to_csv(const ScalingReport& report);
std::string to_json(const ScalingReport& report);
ScalingReport scaling_report_from_csv(std::string_view text);
ScalingReport scaling_report_from_json(std::string_view text);

std::string to_csv(const OverheadReport& report);
std::string to_json(const OverheadReport& report);
OverheadReport overhead_report_from_csv(std::string_view text);
OverheadReport overhead_report_from_json(std::string_view text);

// "nodes,measured_speedup,linear_speedup" rows for plotting measured vs ideal.
std::string plot_data_csv(const ScalingReport& report);

// Input-format CSV for a set of overhead records (what `bench measure` emits).
std::string to_csv(const std::vector<OverheadRecord>& records);

// ---------------------------------------------------------------- measuring

inline constexpr std::string_view kDefaultThroughputPattern =
    R"(([0-9]+(?:\.[0-9]+)?(?:[eE][-+]?[0-9]+)?)\s*(?:img|images|samples)/s)";

struct MeasureOptions {
  std::string throughput_pattern = std::string(kDefaultThroughputPattern);
  std::string benchmark_name;  // defaults to the workload's argv[0]
  std::chrono::milliseconds sample_interval{10};
  // Discarded runs before each side's measured ones (caches, CPU clocks).
  unsigned warmup_runs = 1;
};

// Value of the first capture group of the last match in `output`.
// Throws PatternNotFound; InvalidConfig if the pattern has no capture group.
double extract_throughput(std::string_view output, const std::string& pattern);

// Runs `workload` natively `repetitions` times, then the same number of
// times inside `spec`'s container (never interleaved). Each run's throughput
// is parsed from its combined stdout/stderr and the minimum MemFree seen
// while it ran is recorded; the record holds medians over repetitions.
// Throws WorkloadError (WorkloadFailed) or PatternNotFound.
OverheadRecord measure_pair(const std::vector<std::string>& workload, const ContainerSpec& spec,
                            unsigned repetitions, const MeasureOptions& options = {});

double median(std::vector<double> values);

}  // namespace udss
