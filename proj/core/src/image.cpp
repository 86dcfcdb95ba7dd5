#include "udss/image.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <deque>
#include <future>
#include <map>
#include <thread>
#include <variant>

#include <json.hpp>

#include "udss/error.hpp"
#include "udss/gzip.hpp"
#include "udss/log.hpp"
#include "udss/path.hpp"
#include "udss/stream.hpp"
#include "udss/tar.hpp"

namespace udss {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(EntryKind kind) noexcept {
  switch (kind) {
    case EntryKind::file: return "file";
    case EntryKind::directory: return "dir";
    case EntryKind::symlink: return "symlink";
    case EntryKind::hardlink: return "hardlink";
    case EntryKind::whiteout: return "whiteout";
    case EntryKind::opaque: return "opaque";
  }
  return "?";
}

std::string whiteout_target(const LayerEntry& entry) {
  return join_path(parent_path(entry.path), base_name(entry.path).substr(kWhiteoutPrefix.size()));
}

std::string sanitize_image_name(std::string_view name) {
  std::string out;
  for (char c : name) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '.' || c == '_' || c == '-' || c == '+';
    out += ok ? c : '.';
  }
  if (out.empty() || out == "." || out == "..") return "image";
  if (out.front() == '.') out.front() = '_';
  return out;
}

namespace {

constexpr std::string_view kRefNameAnnotation = "org.opencontainers.image.ref.name";

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::MalformedImage, what + " is not valid JSON: " + e.what());
  }
}

void check_media_type(const std::string& media_type) {
  if (media_type.find("zstd") != std::string::npos) {
    throw Error(Errc::UnsupportedMediaType, "zstd layers are not supported: " + media_type);
  }
  if (media_type.empty() || media_type.find("tar") != std::string::npos) return;
  throw Error(Errc::UnsupportedMediaType, "not a layer tarball: " + media_type);
}

void verify(const Digest& expected, const Digest& actual, const std::string& what) {
  if (expected != actual) {
    throw Error(Errc::DigestMismatch,
                what + ": expected " + expected.str() + ", content hashes to " + actual.str());
  }
}

std::vector<std::string> string_list(const json& j) {
  std::vector<std::string> out;
  if (!j.is_array()) return out;
  for (const auto& v : j) {
    if (v.is_string()) out.push_back(v.get<std::string>());
  }
  return out;
}

void read_config(const json& config, ImageManifest& m) {
  const json* section = nullptr;
  if (config.contains("config") && config["config"].is_object()) section = &config["config"];
  if (section == nullptr) return;
  if (section->contains("Env")) m.config_env = string_list((*section)["Env"]);
  if (section->contains("WorkingDir") && (*section)["WorkingDir"].is_string()) {
    auto wd = (*section)["WorkingDir"].get<std::string>();
    if (!wd.empty()) m.config_workdir = wd;
  }
}

std::vector<Digest> diff_ids(const json& config) {
  std::vector<Digest> out;
  if (!config.contains("rootfs") || !config["rootfs"].is_object()) return out;
  for (const auto& s : string_list(config["rootfs"].value("diff_ids", json::array()))) {
    out.push_back(Digest::parse(s));
  }
  return out;
}

// ---------------------------------------------------------------- OCI layout

class OciLayoutStore final : public BlobStore {
 public:
  explicit OciLayoutStore(fs::path root) : root_(std::move(root)) {}

  fs::path blob_path(const Digest& d) const { return root_ / "blobs" / d.algorithm / d.hex; }

  std::string read_blob(const Digest& d) const {
    auto p = blob_path(d);
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) throw Error(Errc::MissingBlob, "blob " + d.str() + " not found");
    return read_file(p);
  }

  std::string read(const LayerRef& layer) const override {
    std::error_code ec;
    auto p = root_ / layer.location;
    if (!fs::is_regular_file(p, ec)) {
      throw Error(Errc::MissingBlob, "layer blob " + layer.digest.str() + " not found");
    }
    return read_file(p);
  }

 private:
  fs::path root_;
};

struct Descriptor {
  std::string media_type;
  Digest digest;
  std::optional<std::uint64_t> size;
  json annotations;
  json platform;
};

Descriptor parse_descriptor(const json& j, const std::string& what) {
  if (!j.is_object() || !j.contains("digest") || !j["digest"].is_string()) {
    throw Error(Errc::MalformedImage, what + " has no digest");
  }
  Descriptor d;
  d.media_type = j.value("mediaType", "");
  d.digest = Digest::parse(j["digest"].get<std::string>());
  if (j.contains("size") && j["size"].is_number_unsigned()) d.size = j["size"].get<std::uint64_t>();
  d.annotations = j.value("annotations", json::object());
  d.platform = j.value("platform", json::object());
  return d;
}

std::string read_verified(const OciLayoutStore& store, const Descriptor& d, const std::string& what) {
  std::string bytes = store.read_blob(d.digest);
  verify(d.digest, sha256(bytes), what);
  if (d.size && *d.size != bytes.size()) {
    throw Error(Errc::DigestMismatch, what + ": declared size " + std::to_string(*d.size) +
                                          " but blob has " + std::to_string(bytes.size()));
  }
  return bytes;
}

bool is_index_type(const std::string& media_type) {
  return media_type == "application/vnd.oci.image.index.v1+json" ||
         media_type == "application/vnd.docker.distribution.manifest.list.v2+json";
}

// Picks the manifest for this host from an index, preferring linux/amd64.
Descriptor pick_manifest(const json& index, const std::string& what) {
  if (!index.contains("manifests") || !index["manifests"].is_array() ||
      index["manifests"].empty()) {
    throw Error(Errc::MalformedImage, what + " lists no manifests");
  }
  std::vector<Descriptor> all;
  for (const auto& m : index["manifests"]) all.push_back(parse_descriptor(m, what + " entry"));
  for (const auto& d : all) {
    if (d.platform.value("os", "linux") == "linux" &&
        d.platform.value("architecture", "amd64") == "amd64") {
      return d;
    }
  }
  return all.front();
}

Image open_oci_layout(const fs::path& root) {
  auto store = std::make_shared<OciLayoutStore>(root);
  json layout = parse_json(read_file(root / "oci-layout"), "oci-layout");
  if (!layout.is_object() || !layout.contains("imageLayoutVersion")) {
    throw Error(Errc::UnknownFormat, "oci-layout file lacks imageLayoutVersion");
  }
  json index = parse_json(read_file(root / "index.json"), "index.json");
  Descriptor chosen = pick_manifest(index, "index.json");
  std::string name;
  if (chosen.annotations.contains(kRefNameAnnotation)) {
    name = chosen.annotations[std::string(kRefNameAnnotation)].get<std::string>();
  }
  for (int depth = 0; is_index_type(chosen.media_type); ++depth) {
    if (depth > 4) throw Error(Errc::MalformedImage, "image index nesting too deep");
    json nested = parse_json(read_verified(*store, chosen, "nested index"), "nested index");
    chosen = pick_manifest(nested, "nested index");
  }

  json manifest = parse_json(read_verified(*store, chosen, "image manifest"), "image manifest");
  if (!manifest.contains("config")) throw Error(Errc::MalformedImage, "image manifest has no config");
  Descriptor config_desc = parse_descriptor(manifest["config"], "config descriptor");
  json config = parse_json(read_verified(*store, config_desc, "image config"), "image config");

  ImageManifest m;
  m.image_name = name.empty() ? fs::absolute(root).lexically_normal().filename().string() : name;
  if (m.image_name.empty()) m.image_name = fs::absolute(root).parent_path().filename().string();
  read_config(config, m);
  auto ids = diff_ids(config);

  if (!manifest.contains("layers") || !manifest["layers"].is_array()) {
    throw Error(Errc::MalformedImage, "image manifest has no layer list");
  }
  const auto& layers = manifest["layers"];
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Descriptor d = parse_descriptor(layers[i], "layer " + std::to_string(i));
    check_media_type(d.media_type);
    LayerRef ref;
    ref.digest = d.digest;
    ref.media_type = d.media_type;
    ref.location = "blobs/" + d.digest.algorithm + "/" + d.digest.hex;
    if (ids.size() == layers.size()) ref.diff_id = ids[i];
    auto path = store->blob_path(d.digest);
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) {
      throw Error(Errc::MissingBlob, "layer blob " + d.digest.str() + " not found");
    }
    verify(d.digest, sha256_file(path), "layer " + std::to_string(i));
    m.layers.push_back(std::move(ref));
  }
  if (m.layers.empty()) throw Error(Errc::EmptyImage, "image has no layers");
  return Image{ImageFormat::oci_layout, std::move(m), std::move(store)};
}

// ------------------------------------------------------------ docker save tar

class DockerArchiveStore final : public BlobStore {
 public:
  struct Extent {
    std::uint64_t offset;
    std::uint64_t size;
  };

  explicit DockerArchiveStore(fs::path file) : file_(std::move(file)) {
    // gzip-compressed archives are held in memory; plain tars are indexed
    std::string magic(2, '\0');
    {
      int fd = ::open(file_.c_str(), O_RDONLY | O_CLOEXEC);
      if (fd < 0) throw_errno(Errc::IoFailure, "open " + file_.string());
      if (::read(fd, magic.data(), 2) != 2) magic.clear();
      ::close(fd);
    }
    GzipFileSource source(file_);
    tar::Reader reader(source);
    bool compressed = has_gzip_magic(magic);
    while (auto h = reader.next()) {
      if (!h->is_regular()) continue;
      std::string name = normalize_relative(h->path);
      if (compressed) {
        members_[name] = reader.read_payload();
      } else {
        members_[name] = Extent{reader.offset(), h->size};
      }
    }
  }

  bool contains(const std::string& member) const { return members_.count(member) != 0; }

  std::string read_member(const std::string& member) const {
    std::string key;
    try {
      key = normalize_relative(member);
    } catch (const Error&) {
      throw Error(Errc::MalformedImage, "member path escapes the archive: " + member);
    }
    auto it = members_.find(key);
    if (it == members_.end()) throw Error(Errc::MissingBlob, "archive member '" + member + "' not found");
    if (const auto* data = std::get_if<std::string>(&it->second)) return *data;
    const auto& extent = std::get<Extent>(it->second);
    int fd = ::open(file_.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd < 0) throw_errno(Errc::IoFailure, "open " + file_.string());
    std::string out(static_cast<std::size_t>(extent.size), '\0');
    std::size_t done = 0;
    while (done < out.size()) {
      ssize_t n = ::pread(fd, out.data() + done, out.size() - done,
                          static_cast<off_t>(extent.offset + done));
      if (n <= 0) {
        ::close(fd);
        throw Error(Errc::IoFailure, "short read of " + member);
      }
      done += static_cast<std::size_t>(n);
    }
    ::close(fd);
    return out;
  }

  std::string read(const LayerRef& layer) const override { return read_member(layer.location); }

 private:
  fs::path file_;
  std::map<std::string, std::variant<Extent, std::string>> members_;
};

// Digest embedded in a member name such as "blobs/sha256/<hex>" or "<hex>.json".
std::optional<Digest> digest_from_member(std::string_view member) {
  std::string_view base = base_name(member);
  if (base.ends_with(".json")) base.remove_suffix(5);
  std::string candidate = "sha256:" + std::string(base);
  if (!Digest::looks_like(candidate)) return std::nullopt;
  if (member.ends_with(".json") || parent_path(member).ends_with("sha256")) {
    return Digest::parse(candidate);
  }
  return std::nullopt;
}

Image open_docker_archive(const fs::path& file) {
  auto store = std::make_shared<DockerArchiveStore>(file);
  json manifest = parse_json(store->read_member("manifest.json"), "manifest.json");
  if (!manifest.is_array() || manifest.empty() || !manifest[0].is_object()) {
    throw Error(Errc::MalformedImage, "manifest.json does not describe an image");
  }
  const json& entry = manifest[0];
  if (!entry.contains("Config") || !entry["Config"].is_string()) {
    throw Error(Errc::MalformedImage, "manifest.json entry has no Config");
  }
  std::string config_member = entry["Config"].get<std::string>();
  std::string config_bytes = store->read_member(config_member);
  if (auto d = digest_from_member(config_member)) verify(*d, sha256(config_bytes), "image config");
  json config = parse_json(config_bytes, "image config");

  ImageManifest m;
  auto tags = string_list(entry.value("RepoTags", json::array()));
  if (!tags.empty()) {
    m.image_name = tags.front();
  } else if (auto d = digest_from_member(config_member)) {
    m.image_name = d->hex.substr(0, 12);
  } else {
    m.image_name = file.stem().string();
  }
  read_config(config, m);

  auto layer_members = string_list(entry.value("Layers", json::array()));
  auto ids = diff_ids(config);
  if (ids.size() != layer_members.size()) {
    throw Error(Errc::MalformedImage, "config lists " + std::to_string(ids.size()) +
                                          " diff_ids for " + std::to_string(layer_members.size()) +
                                          " layers");
  }
  for (std::size_t i = 0; i < layer_members.size(); ++i) {
    const std::string what = "layer " + std::to_string(i);
    std::string blob = store->read_member(layer_members[i]);
    LayerRef ref;
    ref.location = layer_members[i];
    ref.digest = sha256(blob);
    if (auto d = digest_from_member(layer_members[i])) verify(*d, ref.digest, what);
    if (has_zstd_magic(blob)) throw Error(Errc::UnsupportedMediaType, what + " is zstd-compressed");
    bool compressed = has_gzip_magic(blob);
    ref.media_type = compressed ? "application/vnd.docker.image.rootfs.diff.tar.gzip"
                                : "application/vnd.docker.image.rootfs.diff.tar";
    verify(ids[i], compressed ? sha256(gzip_decompress(blob)) : ref.digest, what + " diff_id");
    ref.diff_id = ids[i];
    m.layers.push_back(std::move(ref));
  }
  if (m.layers.empty()) throw Error(Errc::EmptyImage, "image has no layers");
  return Image{ImageFormat::docker_archive, std::move(m), std::move(store)};
}

bool tar_has_member(const fs::path& file, std::string_view member) {
  try {
    GzipFileSource source(file);
    tar::Reader reader(source);
    while (auto h = reader.next()) {
      if (normalize_relative(h->path) == member) return true;
    }
  } catch (const Error&) {
    return false;
  }
  return false;
}

}  // namespace

ImageFormat detect_image_format(const fs::path& input) {
  std::error_code ec;
  if (fs::is_directory(input, ec)) {
    if (fs::is_regular_file(input / "oci-layout", ec) && fs::is_regular_file(input / "index.json", ec)) {
      return ImageFormat::oci_layout;
    }
    throw Error(Errc::UnknownFormat,
                input.string() + " is a directory but not an OCI image layout (no oci-layout/index.json)");
  }
  if (fs::is_regular_file(input, ec) && tar_has_member(input, "manifest.json")) {
    return ImageFormat::docker_archive;
  }
  throw Error(Errc::UnknownFormat,
              input.string() + " is neither an OCI image layout nor a docker-save archive");
}

Image open_image(const fs::path& input) {
  switch (detect_image_format(input)) {
    case ImageFormat::oci_layout: return open_oci_layout(input);
    case ImageFormat::docker_archive: return open_docker_archive(input);
  }
  throw Error(Errc::UnknownFormat, input.string());
}

ImageManifest parse_image(const fs::path& input) { return open_image(input).manifest; }

std::vector<LayerEntry> decode_layer(std::string_view blob, std::vector<std::string>* warnings) {
  auto warn = [&](std::string msg) {
    if (warnings) {
      warnings->push_back(std::move(msg));
    } else {
      log_warn(msg);
    }
  };
  if (has_zstd_magic(blob)) throw Error(Errc::UnsupportedMediaType, "zstd-compressed layer");
  std::string inflated;
  if (has_gzip_magic(blob)) {
    inflated = gzip_decompress(blob);
    blob = inflated;
  }
  MemorySource source(blob);
  tar::Reader reader(source);
  std::vector<LayerEntry> entries;
  while (auto h = reader.next()) {
    LayerEntry e;
    e.path = normalize_relative(h->path);
    if (e.path.empty()) continue;  // "./" root entry
    e.mode = h->mode & 01777;
    e.mtime = h->mtime;
    std::string_view base = base_name(e.path);
    if (base == kOpaqueMarker) {
      e.kind = EntryKind::opaque;
    } else if (base.starts_with(".wh..wh.")) {
      log_debug("ignoring whiteout metadata entry " + e.path);
      continue;
    } else if (base.starts_with(kWhiteoutPrefix)) {
      if (base.size() == kWhiteoutPrefix.size()) {
        throw Error(Errc::MalformedArchive, "whiteout without a target: " + e.path);
      }
      e.kind = EntryKind::whiteout;
    } else if (h->is_regular()) {
      e.kind = EntryKind::file;
      e.payload = reader.read_payload();
    } else if (h->type == tar::kDirectory) {
      e.kind = EntryKind::directory;
    } else if (h->type == tar::kSymlink) {
      e.kind = EntryKind::symlink;
      e.payload = h->linkname;
    } else if (h->type == tar::kHardlink) {
      e.kind = EntryKind::hardlink;
      e.payload = normalize_relative(h->linkname);
    } else if (h->type == tar::kCharDevice || h->type == tar::kBlockDevice ||
               h->type == tar::kFifo) {
      warn("skipping device node or FIFO " + e.path);
      continue;
    } else {
      warn(std::string("skipping unsupported tar member type '") + h->type + "' at " + e.path);
      continue;
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void apply_layer(FlattenedRootfs& tree, const std::vector<LayerEntry>& layer) {
  // deletions see only the lower layers
  for (const auto& e : layer) {
    if (e.kind == EntryKind::whiteout) {
      tree.erase(whiteout_target(e));
    } else if (e.kind == EntryKind::opaque) {
      std::string_view dir = parent_path(e.path);
      if (dir.empty()) {
        tree.erase_children("");
        continue;
      }
      const RootfsNode* node = tree.find(dir);
      if (node && node->kind == NodeKind::directory) tree.erase_children(dir);
    }
  }

  for (const auto& e : layer) {
    if (e.kind == EntryKind::whiteout || e.kind == EntryKind::opaque) continue;
    tree.ensure_parents(e.path);
    RootfsNode node;
    node.mode = e.mode & 01777;
    node.mtime = e.mtime;
    switch (e.kind) {
      case EntryKind::file:
        node.kind = NodeKind::file;
        node.content = std::make_shared<const std::string>(e.payload);
        node.inode = tree.allocate_inode();
        break;
      case EntryKind::directory:
        node.kind = NodeKind::directory;
        node.inode = tree.allocate_inode();
        break;
      case EntryKind::symlink:
        node.kind = NodeKind::symlink;
        node.link_target = e.payload;
        node.inode = tree.allocate_inode();
        break;
      case EntryKind::hardlink: {
        const RootfsNode* target = tree.find(e.payload);
        if (target == nullptr) {
          throw Error(Errc::HardlinkTargetMissing,
                      "hardlink " + e.path + " -> " + e.payload + ": target does not exist");
        }
        if (target->kind == NodeKind::directory) {
          throw Error(Errc::ConflictingKind, "hardlink " + e.path + " points at directory " + e.payload);
        }
        if (e.payload == e.path) continue;
        node = *target;
        break;
      }
      case EntryKind::whiteout:
      case EntryKind::opaque:
        break;
    }
    tree.put(e.path, std::move(node));
  }
}

namespace {

struct DecodedLayer {
  std::vector<LayerEntry> entries;
  std::vector<std::string> warnings;
};

DecodedLayer decode_verified(const LayerRef& ref, const BlobStore& blobs, std::size_t index) {
  const std::string what = "layer " + std::to_string(index);
  std::string blob = blobs.read(ref);
  verify(ref.digest, sha256(blob), what);
  if (ref.diff_id) {
    bool compressed = has_gzip_magic(blob);
    if (compressed) {
      blob = gzip_decompress(blob);
      verify(*ref.diff_id, sha256(blob), what + " diff_id");
    } else {
      verify(*ref.diff_id, ref.digest, what + " diff_id");
    }
  }
  DecodedLayer out;
  out.entries = decode_layer(blob, &out.warnings);
  return out;
}

}  // namespace

FlattenedRootfs flatten(const ImageManifest& manifest, const BlobStore& blobs,
                        const FlattenOptions& options) {
  if (manifest.layers.empty()) throw Error(Errc::EmptyImage, "image has no layers");
  unsigned window = options.decode_parallelism;
  if (window == 0) window = std::max(1u, std::thread::hardware_concurrency());

  FlattenedRootfs tree;
  std::deque<std::future<DecodedLayer>> pending;
  std::size_t launched = 0;
  auto launch_more = [&] {
    while (launched < manifest.layers.size() && pending.size() < window) {
      const LayerRef& ref = manifest.layers[launched];
      pending.push_back(std::async(std::launch::async, decode_verified, std::cref(ref),
                                   std::cref(blobs), launched));
      ++launched;
    }
  };
  launch_more();
  for (std::size_t i = 0; i < manifest.layers.size(); ++i) {
    DecodedLayer layer = pending.front().get();
    pending.pop_front();
    launch_more();
    for (const auto& w : layer.warnings) log_warn("layer " + std::to_string(i) + ": " + w);
    apply_layer(tree, layer.entries);
  }
  return tree;
}

FlattenedRootfs flatten(const Image& image, const FlattenOptions& options) {
  return flatten(image.manifest, *image.blobs, options);
}

void add_image_metadata(FlattenedRootfs& tree, const ImageManifest& manifest) {
  RootfsNode dir;
  dir.kind = NodeKind::directory;
  dir.mode = 0755;
  dir.inode = tree.allocate_inode();
  tree.put(std::string(kMetadataDir), std::move(dir));

  std::string env;
  for (const auto& kv : manifest.config_env) env += kv + "\n";
  RootfsNode env_file;
  env_file.mode = 0644;
  env_file.content = std::make_shared<const std::string>(std::move(env));
  env_file.inode = tree.allocate_inode();
  tree.put(std::string(kEnvironmentFile), std::move(env_file));

  if (manifest.config_workdir) {
    RootfsNode wd;
    wd.mode = 0644;
    wd.content = std::make_shared<const std::string>(*manifest.config_workdir + "\n");
    wd.inode = tree.allocate_inode();
    tree.put(std::string(kWorkdirFile), std::move(wd));
  }
}

}  // namespace udss
