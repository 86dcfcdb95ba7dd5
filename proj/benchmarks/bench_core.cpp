#include <benchmark/benchmark.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "udss/archive.hpp"
#include "udss/bench.hpp"
#include "udss/digest.hpp"
#include "udss/gzip.hpp"
#include "udss/image.hpp"
#include "udss/launcher.hpp"
#include "udss/stream.hpp"

namespace {

namespace fs = std::filesystem;

class Scratch {
 public:
  Scratch() {
    std::string tmpl = (fs::temp_directory_path() / "udss-bench-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) std::abort();
    path_ = tmpl;
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// A layer shaped like a language runtime install: nested directories, many
// small files, a few large ones and some symlinks.
std::vector<udss::LayerEntry> synthetic_layer(int files, unsigned seed, const std::string& prefix = "usr") {
  std::mt19937 rng(seed);
  std::vector<udss::LayerEntry> layer;
  for (int d = 0; d < files / 20 + 1; ++d) {
    layer.push_back({prefix + "/lib/pkg" + std::to_string(d), udss::EntryKind::directory, 0755, 1700000000, ""});
  }
  for (int i = 0; i < files; ++i) {
    std::size_t size = (i % 50 == 0) ? 256 * 1024 : 64 + rng() % 4096;
    std::string content(size, '\0');
    for (auto& c : content) c = static_cast<char>('a' + rng() % 26);
    auto dir = prefix + "/lib/pkg" + std::to_string(i % (files / 20 + 1));
    layer.push_back({dir + "/mod" + std::to_string(i) + ".py", udss::EntryKind::file, 0644, 1700000000,
                     std::move(content)});
    if (i % 25 == 0) {
      layer.push_back({dir + "/link" + std::to_string(i), udss::EntryKind::symlink, 0777, 1700000000,
                       "mod" + std::to_string(i) + ".py"});
    }
  }
  return layer;
}

udss::FlattenedRootfs synthetic_tree(int files) {
  udss::FlattenedRootfs tree;
  udss::apply_layer(tree, synthetic_layer(files, 1));
  return tree;
}

void BM_ApplyLayer(benchmark::State& state) {
  auto layer = synthetic_layer(static_cast<int>(state.range(0)), 7);
  for (auto _ : state) {
    udss::FlattenedRootfs tree;
    udss::apply_layer(tree, layer);
    benchmark::DoNotOptimize(tree.size());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(layer.size()));
}
BENCHMARK(BM_ApplyLayer)->Arg(100)->Arg(1000)->Arg(5000);

// Upper layers that delete half of the lower one and rewrite the rest.
void BM_ApplyLayerWithWhiteouts(benchmark::State& state) {
  int files = static_cast<int>(state.range(0));
  auto base = synthetic_layer(files, 3);
  std::vector<udss::LayerEntry> upper;
  for (int d = 0; d < files / 20 + 1; d += 2) {
    upper.push_back({"usr/lib/pkg" + std::to_string(d) + "/.wh..wh..opq", udss::EntryKind::opaque, 0, 0, ""});
  }
  for (int i = 1; i < files; i += 4) {
    auto dir = "usr/lib/pkg" + std::to_string(i % (files / 20 + 1));
    upper.push_back({dir + "/.wh.mod" + std::to_string(i) + ".py", udss::EntryKind::whiteout, 0, 0, ""});
  }
  for (auto _ : state) {
    state.PauseTiming();
    udss::FlattenedRootfs tree;
    udss::apply_layer(tree, base);
    state.ResumeTiming();
    udss::apply_layer(tree, upper);
    benchmark::DoNotOptimize(tree.size());
  }
}
BENCHMARK(BM_ApplyLayerWithWhiteouts)->Arg(1000)->Arg(5000);

void BM_DecodeLayer(benchmark::State& state) {
  Scratch tmp;
  auto archive = udss::pack(synthetic_tree(static_cast<int>(state.range(0))), "img", tmp.path() / "l.tar.gz");
  auto blob = udss::read_file(archive.path);
  for (auto _ : state) {
    auto entries = udss::decode_layer(blob);
    benchmark::DoNotOptimize(entries.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<int64_t>(blob.size()));
}
BENCHMARK(BM_DecodeLayer)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_Pack(benchmark::State& state) {
  Scratch tmp;
  auto tree = synthetic_tree(static_cast<int>(state.range(0)));
  udss::PackOptions opts{static_cast<int>(state.range(1))};
  for (auto _ : state) {
    auto archive = udss::pack(tree, "img", tmp.path() / "img.tar.gz", opts);
    benchmark::DoNotOptimize(archive.path);
  }
}
BENCHMARK(BM_Pack)->Args({1000, 1})->Args({1000, 6})->Unit(benchmark::kMillisecond);

void BM_Unpack(benchmark::State& state) {
  Scratch tmp;
  auto archive = udss::pack(synthetic_tree(static_cast<int>(state.range(0))), "img", tmp.path() / "img.tar.gz");
  fs::create_directory(tmp.path() / "dest");
  for (auto _ : state) {
    auto root = udss::unpack(archive, tmp.path() / "dest", true);
    benchmark::DoNotOptimize(root);
  }
}
BENCHMARK(BM_Unpack)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_Sha256(benchmark::State& state) {
  std::string data(static_cast<std::size_t>(state.range(0)), 'x');
  for (auto _ : state) benchmark::DoNotOptimize(udss::sha256(data));
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Sha256)->Arg(1 << 20);

void BM_ScalingReport(benchmark::State& state) {
  std::vector<udss::ScalingRecord> series;
  for (unsigned n = 1; n <= static_cast<unsigned>(state.range(0)); ++n) series.push_back({n, 3806.0 * 4 / n});
  for (auto _ : state) benchmark::DoNotOptimize(udss::scaling_report(series).rows.size());
}
BENCHMARK(BM_ScalingReport)->Arg(4)->Arg(1024);

void BM_OverheadCsvRoundTrip(benchmark::State& state) {
  std::vector<udss::OverheadRecord> recs;
  for (int i = 0; i < state.range(0); ++i) {
    recs.push_back({"bench" + std::to_string(i), 1968.0 + i, 1973.0, 331.29, 331.33});
  }
  auto report = udss::overhead_report(recs);
  for (auto _ : state) {
    auto again = udss::overhead_report_from_csv(udss::to_csv(report));
    benchmark::DoNotOptimize(again.rows.size());
  }
}
BENCHMARK(BM_OverheadCsvRoundTrip)->Arg(100);

void BM_RenderSlurm(benchmark::State& state) {
  udss::LaunchPlan plan;
  plan.nodes = 32;
  plan.physical_cores_per_node = 48;
  plan.threads_per_core = 2;
  plan.container = "/scratch/tf";
  plan.command = {"python3", "tf_cnn_benchmarks.py", "--model=resnet50"};
  for (auto _ : state) benchmark::DoNotOptimize(udss::render_slurm(plan));
}
BENCHMARK(BM_RenderSlurm);

}  // namespace

BENCHMARK_MAIN();
