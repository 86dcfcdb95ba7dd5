#include "fixtures.hpp"

#include <sys/mman.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <system_error>

#include <json.hpp>

#include "udss/archive.hpp"
#include "udss/digest.hpp"
#include "udss/gzip.hpp"
#include "udss/stream.hpp"
#include "udss/tar.hpp"

namespace udss::testing {

using nlohmann::json;

TempDir::TempDir(const std::string& prefix) {
  const char* base = std::getenv("TMPDIR");
  fs::path tmpl = fs::path(base && *base ? base : "/tmp") / (prefix + "-XXXXXX");
  std::string s = tmpl.string();
  if (!::mkdtemp(s.data())) throw std::system_error(errno, std::generic_category(), "mkdtemp");
  path_ = s;
}

TempDir::~TempDir() { force_remove_all(path_); }

void force_remove_all(const fs::path& p) {
  std::error_code ec;
  if (fs::is_directory(fs::symlink_status(p, ec))) {
    fs::permissions(p, fs::perms::owner_all, fs::perm_options::add, ec);
    for (auto it = fs::directory_iterator(p, ec); !ec && it != fs::directory_iterator(); it.increment(ec)) {
      force_remove_all(it->path());
    }
  }
  fs::remove(p, ec);
}

std::string read_whole(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string layer_tar(const std::vector<LayerEntry>& entries) {
  StringSink sink;
  tar::Writer w(sink);
  for (const auto& e : entries) {
    tar::Header h;
    h.path = e.path;
    h.mode = e.mode;
    h.mtime = e.mtime;
    switch (e.kind) {
      case EntryKind::file:
        h.type = tar::kRegular;
        h.size = e.payload.size();
        w.add(h, e.payload);
        continue;
      case EntryKind::directory:
        h.type = tar::kDirectory;
        h.path += "/";
        break;
      case EntryKind::symlink:
        h.type = tar::kSymlink;
        h.mode = 0777;
        h.linkname = e.payload;
        break;
      case EntryKind::hardlink:
        h.type = tar::kHardlink;
        h.linkname = e.payload;
        break;
      case EntryKind::whiteout:
      case EntryKind::opaque:
        h.type = tar::kRegular;
        h.size = 0;
        break;
    }
    w.add(h);
  }
  w.finish();
  return sink.take();
}

std::vector<std::string> layer_blobs(const FixtureImage& image) {
  std::vector<std::string> out;
  for (const auto& layer : image.layers) {
    std::string tar = layer_tar(layer);
    out.push_back(image.gzip_layers ? gzip_compress(tar, 6) : tar);
  }
  return out;
}

namespace {

json config_json(const FixtureImage& image) {
  json diff_ids = json::array();
  for (const auto& layer : image.layers) diff_ids.push_back(sha256(layer_tar(layer)).str());
  json cfg = json::object();
  if (!image.env.empty()) cfg["Env"] = image.env;
  if (image.workdir) cfg["WorkingDir"] = *image.workdir;
  return json{{"architecture", "amd64"},
              {"os", "linux"},
              {"config", cfg},
              {"rootfs", {{"type", "layers"}, {"diff_ids", diff_ids}}}};
}

std::string put_blob(const fs::path& dir, const std::string& bytes) {
  Digest d = sha256(bytes);
  fs::create_directories(dir / "blobs" / "sha256");
  write_file(dir / "blobs" / "sha256" / d.hex, bytes);
  return d.str();
}

}  // namespace

fs::path write_oci_layout(const FixtureImage& image, const fs::path& dir) {
  fs::create_directories(dir);
  write_file(dir / "oci-layout", R"({"imageLayoutVersion": "1.0.0"})");
  std::string cfg = config_json(image).dump();
  json manifest{{"schemaVersion", 2},
                {"mediaType", "application/vnd.oci.image.manifest.v1+json"},
                {"config",
                 {{"mediaType", "application/vnd.oci.image.config.v1+json"},
                  {"digest", put_blob(dir, cfg)},
                  {"size", cfg.size()}}},
                {"layers", json::array()}};
  for (const auto& blob : layer_blobs(image)) {
    manifest["layers"].push_back(
        {{"mediaType", image.gzip_layers ? "application/vnd.oci.image.layer.v1.tar+gzip"
                                         : "application/vnd.oci.image.layer.v1.tar"},
         {"digest", put_blob(dir, blob)},
         {"size", blob.size()}});
  }
  std::string mbytes = manifest.dump();
  json index{{"schemaVersion", 2},
             {"manifests",
              {{{"mediaType", "application/vnd.oci.image.manifest.v1+json"},
                {"digest", put_blob(dir, mbytes)},
                {"size", mbytes.size()},
                {"annotations", {{"org.opencontainers.image.ref.name", image.name}}}}}}};
  write_file(dir / "index.json", index.dump());
  return dir;
}

fs::path write_docker_archive(const FixtureImage& image, const fs::path& file) {
  StringSink sink;
  tar::Writer w(sink);
  auto add_file = [&](const std::string& path, const std::string& data) {
    tar::Header h;
    h.path = path;
    h.size = data.size();
    w.add(h, data);
  };
  std::string cfg = config_json(image).dump();
  std::string cfg_name = sha256(cfg).hex + ".json";
  json layers = json::array();
  auto blobs = layer_blobs(image);
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    std::string id = sha256(blobs[i] + std::to_string(i)).hex;
    tar::Header d;
    d.path = id + "/";
    d.type = tar::kDirectory;
    d.mode = 0755;
    w.add(d);
    add_file(id + "/VERSION", "1.0");
    add_file(id + "/layer.tar", blobs[i]);
    layers.push_back(id + "/layer.tar");
  }
  add_file(cfg_name, cfg);
  json manifest = json::array({{{"Config", cfg_name}, {"RepoTags", {image.name + ":latest"}}, {"Layers", layers}}});
  add_file("manifest.json", manifest.dump());
  w.finish();
  write_file(file, sink.str());
  return file;
}

LayerEntry file_entry(std::string path, std::string content, std::uint32_t mode, std::int64_t mtime) {
  return LayerEntry{std::move(path), EntryKind::file, mode, mtime, std::move(content)};
}

LayerEntry dir_entry(std::string path, std::uint32_t mode, std::int64_t mtime) {
  return LayerEntry{std::move(path), EntryKind::directory, mode, mtime, {}};
}

LayerEntry symlink_entry(std::string path, std::string target, std::int64_t mtime) {
  return LayerEntry{std::move(path), EntryKind::symlink, 0777, mtime, std::move(target)};
}

LayerEntry hardlink_entry(std::string path, std::string target) {
  return LayerEntry{std::move(path), EntryKind::hardlink, 0644, 0, std::move(target)};
}

LayerEntry whiteout_entry(const std::string& victim) {
  auto slash = victim.rfind('/');
  std::string parent = slash == std::string::npos ? "" : victim.substr(0, slash + 1);
  std::string base = slash == std::string::npos ? victim : victim.substr(slash + 1);
  return LayerEntry{parent + ".wh." + base, EntryKind::whiteout, 0644, 0, {}};
}

LayerEntry opaque_entry(const std::string& directory) {
  std::string prefix = directory.empty() ? "" : directory + "/";
  return LayerEntry{prefix + ".wh..wh..opq", EntryKind::opaque, 0644, 0, {}};
}

FixtureImage three_layer_fixture() {
  FixtureImage img;
  img.name = "three";
  img.env = {"PATH=/usr/bin:/bin", "GREETING=hello"};
  img.workdir = "/work";
  img.layers.push_back({
      dir_entry("etc", 0755, 1000),
      file_entry("etc/os-release", "NAME=base\n", 0644, 1000),
      dir_entry("usr", 0755, 1000),
      dir_entry("usr/bin", 0755, 1000),
      file_entry("usr/bin/tool", "v1", 0755, 1000),
      dir_entry("var/cache", 0755, 1000),
      file_entry("var/cache/a", "a", 0644, 1000),
      file_entry("var/cache/b", "b", 0644, 1000),
      dir_entry("work", 0755, 1000),
  });
  img.layers.push_back({
      file_entry("usr/bin/tool", "v2", 0755, 2000),
      symlink_entry("usr/bin/tool-link", "tool", 2000),
      hardlink_entry("usr/bin/tool-hard", "usr/bin/tool"),
      whiteout_entry("etc/os-release"),
      file_entry("etc/hostname", "fixture\n", 0644, 2000),
  });
  img.layers.push_back({
      opaque_entry("var/cache"),
      file_entry("var/cache/c", "c", 0600, 3000),
      file_entry("etc/os-release", "NAME=top\n", 0644, 3000),
      file_entry("work/data.txt", "payload", 0644, 3000),
  });
  return img;
}

FixtureImage runnable_fixture(const fs::path& fixturebox, const std::string& name,
                              const std::vector<LayerEntry>& extra) {
  FixtureImage img;
  img.name = name;
  img.env = {"PATH=/bin", "FIXTURE_IMAGE=1"};
  std::vector<LayerEntry> base;
  for (const char* d : {"bin", "dev", "proc", "sys", "tmp", "mnt", "etc", "work"}) base.push_back(dir_entry(d, 0755));
  base.push_back(file_entry("bin/fixturebox", read_whole(fixturebox), 0755));
  for (const char* applet : {"echo", "id", "cat", "touch", "exit", "sleep", "pwd", "env", "selfcheck",
                             "workload", "true", "false"}) {
    base.push_back(symlink_entry(std::string("bin/") + applet, "fixturebox"));
  }
  base.push_back(file_entry("etc/hostname", "fixture\n"));
  img.layers.push_back(std::move(base));
  if (!extra.empty()) img.layers.push_back(extra);
  return img;
}

fs::path install_image(const FixtureImage& image, const fs::path& work) {
  fs::create_directories(work);
  auto layout = write_oci_layout(image, work / (image.name + ".oci"));
  Image img = open_image(layout);
  FlattenedRootfs tree = flatten(img);
  add_image_metadata(tree, img.manifest);
  auto archive = pack(tree, sanitize_image_name(image.name), work / (image.name + ".tar.gz"));
  fs::create_directories(work / "unpacked");
  return unpack(archive, work / "unpacked", true);
}

Captured run_captured(const ContainerSpec& spec) {
  int fd = ::memfd_create("udss-capture", MFD_CLOEXEC);
  if (fd < 0) throw std::system_error(errno, std::generic_category(), "memfd_create");
  Captured c;
  try {
    c.exit_code = run(spec, StdioRedirect{-1, fd, fd});
  } catch (...) {
    ::close(fd);
    throw;
  }
  off_t size = ::lseek(fd, 0, SEEK_END);
  c.output.resize(static_cast<std::size_t>(size));
  if (size > 0 && ::pread(fd, c.output.data(), c.output.size(), 0) != size) c.output.clear();
  ::close(fd);
  return c;
}

}  // namespace udss::testing
