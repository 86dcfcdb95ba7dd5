#include <gtest/gtest.h>

#include "cases.hpp"
#include "expect.hpp"
#include "fixtures.hpp"
#include "generators.hpp"
#include "oracle.hpp"
#include "udss/archive.hpp"
#include "udss/digest.hpp"
#include "udss/image.hpp"

namespace {

using namespace udss::testing;
using udss::Errc;

TEST(FlattenProperty, MatchesSequentialExtractionOracle) {
  Rng rng(20240611);
  int errors = 0;
  for (int i = 0; i < 200; ++i) {
    auto layers = random_layer_stack(rng, {5, 50});
    TempDir scratch;
    auto oracle_error = extract_layers(layers, scratch.path());
    auto got = flatten_stack(layers);
    if (got.error != oracle_error) {
      for (std::size_t l = 0; l < layers.size(); ++l) {
        for (const auto& e : layers[l]) {
          std::cerr << l << " " << udss::to_string(e.kind) << " " << e.path
                    << (e.kind == udss::EntryKind::hardlink ? " -> " + e.payload : "") << "\n";
        }
      }
    }
    ASSERT_EQ(got.error, oracle_error) << "case " << i;
    if (oracle_error) {
      ++errors;
      continue;
    }
    auto d = diff(snapshot_dir(scratch.path()), snapshot_tree(*got.tree));
    ASSERT_TRUE(d.empty()) << "case " << i << ": " << d.front();
  }
  EXPECT_LT(errors, 40) << "generator produces too many failing stacks";
}

TEST(FlattenProperty, NoWhiteoutSurvives) {
  Rng rng(99);
  for (int i = 0; i < 100; ++i) {
    auto got = flatten_stack(random_layer_stack(rng));
    if (!got.tree) continue;
    for (const auto& [path, node] : got.tree->tree()) {
      auto slash = path.rfind('/');
      std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
      ASSERT_FALSE(base.starts_with(".wh.")) << path;
    }
  }
}

TEST(FlattenProperty, EveryParentIsADirectory) {
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    auto got = flatten_stack(random_layer_stack(rng));
    if (!got.tree) continue;
    for (const auto& [path, node] : got.tree->tree()) {
      auto slash = path.rfind('/');
      if (slash == std::string::npos) continue;
      const auto* parent = got.tree->find(path.substr(0, slash));
      ASSERT_TRUE(parent && parent->kind == udss::NodeKind::directory) << path;
    }
  }
}

TEST(FlattenProperty, ReflattenOfPackedArchiveIsIdentity) {
  Rng rng(4242);
  TempDir tmp;
  for (int i = 0; i < 40; ++i) {
    auto got = flatten_stack(random_layer_stack(rng));
    if (!got.tree || got.tree->empty()) continue;
    auto out = tmp / ("r" + std::to_string(i) + ".tar.gz");
    udss::pack(*got.tree, "img", out);
    auto again = udss::read_archive(out);
    ASSERT_TRUE(again == *got.tree) << udss::FlattenedRootfs::differences(*got.tree, again).front();
  }
}

TEST(FlattenProperty, EscapingLayersFailWithoutWriting) {
  Rng rng(5);
  TempDir tmp;
  auto before = snapshot_dir(tmp.path());
  for (int i = 0; i < 50; ++i) {
    auto layers = random_layer_stack(rng, {3, 10});
    if (flatten_stack(layers).error) continue;
    auto& victim = layers[uniform(rng, 0, static_cast<int>(layers.size()) - 1)];
    std::string evil = pick(rng, std::vector<std::string>{"../escape", "a/../../escape", "../../etc/passwd"});
    victim.insert(victim.begin() + uniform(rng, 0, static_cast<int>(victim.size())), file_entry(evil, "x"));
    auto got = flatten_stack(layers);
    ASSERT_EQ(got.error, Errc::PathEscape) << evil;
  }
  EXPECT_TRUE(diff(before, snapshot_dir(tmp.path())).empty());
  EXPECT_FALSE(std::filesystem::exists(tmp.path().parent_path() / "escape"));
}

}  // namespace
