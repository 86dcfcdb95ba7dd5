#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "udss/image.hpp"
#include "udss/runtime.hpp"

namespace udss::testing {

namespace fs = std::filesystem;

// Scratch directory removed (recursively, permissions permitting) on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& prefix = "udss-test");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const noexcept { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

void force_remove_all(const fs::path& p);

// Encodes entries as a layer tar. Whiteouts and opaque markers become empty
// regular files at entry.path (which carries the ".wh." basename).
std::string layer_tar(const std::vector<LayerEntry>& entries);

struct FixtureImage {
  std::string name = "fixture";
  std::vector<std::vector<LayerEntry>> layers;
  bool gzip_layers = true;
  std::vector<std::string> env;
  std::optional<std::string> workdir;
};

// Blob bytes for each layer, as written by the image writers.
std::vector<std::string> layer_blobs(const FixtureImage& image);

// OCI image-layout directory at `dir` (created). The image name goes into
// the index's ref.name annotation.
fs::path write_oci_layout(const FixtureImage& image, const fs::path& dir);

// docker-save tar at `file`: manifest.json, <config>.json, <id>/layer.tar.
fs::path write_docker_archive(const FixtureImage& image, const fs::path& file);

LayerEntry file_entry(std::string path, std::string content, std::uint32_t mode = 0644, std::int64_t mtime = 0);
LayerEntry dir_entry(std::string path, std::uint32_t mode = 0755, std::int64_t mtime = 0);
LayerEntry symlink_entry(std::string path, std::string target, std::int64_t mtime = 0);
LayerEntry hardlink_entry(std::string path, std::string target);
LayerEntry whiteout_entry(const std::string& victim);       // "a/b" -> "a/.wh.b"
LayerEntry opaque_entry(const std::string& directory);      // "d" -> "d/.wh..wh..opq"

// Three layers with overwrites, a whiteout and an opaque directory.
FixtureImage three_layer_fixture();

// A runnable image: the static multi-call `fixturebox` binary at /bin with
// applet symlinks, plus empty mount points (dev, proc, sys, tmp, mnt).
FixtureImage runnable_fixture(const fs::path& fixturebox, const std::string& name = "tf",
                              const std::vector<LayerEntry>& extra = {});

std::string read_whole(const fs::path& file);

// OCI layout -> flatten (with image metadata) -> pack -> unpack under `work`.
// Returns the unpacked rootfs directory.
fs::path install_image(const FixtureImage& image, const fs::path& work);

struct Captured {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

// runtime::run with stdout and stderr captured.
Captured run_captured(const ContainerSpec& spec);

}  // namespace udss::testing
