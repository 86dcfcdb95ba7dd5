#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <filesystem>
#include <regex>
#include <thread>

#include "subprocess.hpp"
#include "udss/bench.hpp"
#include "udss/error.hpp"
#include "udss/log.hpp"

namespace udss {

double extract_throughput(std::string_view output, const std::string& pattern) {
  std::regex re;
  try {
    re = std::regex(pattern, std::regex::ECMAScript);
  } catch (const std::regex_error& e) {
    throw Error(Errc::InvalidConfig, "bad throughput pattern '" + pattern + "': " + e.what());
  }
  if (re.mark_count() < 1) {
    throw Error(Errc::InvalidConfig, "throughput pattern needs a capture group: " + pattern);
  }
  std::string text(output);
  std::optional<std::string> last;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
    last = (*it)[1].str();
  }
  if (!last) throw Error(Errc::PatternNotFound, "no throughput matching '" + pattern + "' in workload output");
  try {
    return std::stod(*last);
  } catch (const std::exception&) {
    throw Error(Errc::PatternNotFound, "captured '" + *last + "' is not a number");
  }
}

namespace {

constexpr double kBytesPerGiB = 1024.0 * 1024.0 * 1024.0;

struct RunResult {
  double throughput;
  double min_free_gb;
};

// Polls the child until it exits, tracking the lowest MemFree.
int wait_sampling(pid_t pid, std::chrono::milliseconds interval, unsigned long long& min_free) {
  for (;;) {
    int status = 0;
    pid_t r = waitpid(pid, &status, WNOHANG);
    if (r == pid) return detail::decode_wait_status(status);
    if (r < 0 && errno != EINTR) throw_errno(Errc::IoFailure, "waitpid");
    auto f = detail::free_memory_bytes();
    if (f != 0) min_free = std::min(min_free, f);
    std::this_thread::sleep_for(interval);
  }
}

RunResult run_once(const std::vector<std::string>& workload, const ContainerSpec* container,
                   const MeasureOptions& options) {
  detail::CaptureFile capture;
  unsigned long long min_free = detail::free_memory_bytes();
  if (min_free == 0) min_free = ~0ULL;
  pid_t pid;
  if (container) {
    ContainerSpec spec = *container;
    spec.command = workload;
    pid = spawn(spec, StdioRedirect{-1, capture.fd(), capture.fd()});
  } else {
    pid = detail::spawn_native(workload, capture.fd());
  }
  int code = wait_sampling(pid, options.sample_interval, min_free);
  std::string output = capture.contents();
  if (code != 0) {
    std::string where = container ? "containerized" : "native";
    std::string tail = output.size() > 400 ? output.substr(output.size() - 400) : output;
    throw WorkloadError(where + " run of '" + workload.front() + "' exited with status " + std::to_string(code) +
                            (tail.empty() ? "" : ": " + tail),
                        code, container != nullptr);
  }
  double tp = extract_throughput(output, options.throughput_pattern);
  double free_gb = min_free == ~0ULL ? 0.0 : static_cast<double>(min_free) / kBytesPerGiB;
  return {tp, free_gb};
}

}  // namespace

OverheadRecord measure_pair(const std::vector<std::string>& workload, const ContainerSpec& spec,
                            unsigned repetitions, const MeasureOptions& options) {
  if (workload.empty()) throw Error(Errc::InvalidConfig, "empty workload command");
  if (repetitions == 0) throw Error(Errc::InvalidConfig, "repetitions must be at least 1");
  {
    ContainerSpec check = spec;
    check.command = workload;
    validate(check);
  }

  std::vector<double> tp_native, mem_native, tp_container, mem_container;
  for (unsigned i = 0; i < options.warmup_runs; ++i) run_once(workload, nullptr, options);
  for (unsigned i = 0; i < repetitions; ++i) {
    auto r = run_once(workload, nullptr, options);
    log_debug("native run " + std::to_string(i + 1) + ": " + std::to_string(r.throughput) + " img/s");
    tp_native.push_back(r.throughput);
    mem_native.push_back(r.min_free_gb);
  }
  for (unsigned i = 0; i < options.warmup_runs; ++i) run_once(workload, &spec, options);
  for (unsigned i = 0; i < repetitions; ++i) {
    auto r = run_once(workload, &spec, options);
    log_debug("container run " + std::to_string(i + 1) + ": " + std::to_string(r.throughput) + " img/s");
    tp_container.push_back(r.throughput);
    mem_container.push_back(r.min_free_gb);
  }

  OverheadRecord rec;
  rec.benchmark_name = options.benchmark_name.empty()
                           ? std::filesystem::path(workload.front()).filename().string()
                           : options.benchmark_name;
  rec.throughput_without = median(tp_native);
  rec.throughput_with = median(tp_container);
  rec.free_mem_without_gb = median(mem_native);
  rec.free_mem_with_gb = median(mem_container);
  return rec;
}

}  // namespace udss
