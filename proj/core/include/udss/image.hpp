#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "udss/digest.hpp"
#include "udss/rootfs.hpp"

namespace udss {

// OCI whiteout convention.
inline constexpr std::string_view kWhiteoutPrefix = ".wh.";
inline constexpr std::string_view kOpaqueMarker = ".wh..wh..opq";

enum class EntryKind { file, directory, symlink, hardlink, whiteout, opaque };

std::string_view to_string(EntryKind kind) noexcept;

// A single member of a layer tarball, already classified. `path` is
// normalized; for whiteouts it is the marker's own path (".wh.NAME").
// `payload` holds file bytes, a symlink target, or a hardlink's target path.
struct LayerEntry {
  std::string path;
  EntryKind kind = EntryKind::file;
  std::uint32_t mode = 0644;
  std::int64_t mtime = 0;
  std::string payload;
};

// Path removed by a whiteout entry, e.g. "a/.wh.f" -> "a/f".
std::string whiteout_target(const LayerEntry& entry);

struct LayerRef {
  Digest digest;          // hash of the blob as stored
  std::string location;   // blob path inside the image input
  std::string media_type;
  std::optional<Digest> diff_id;  // hash of the uncompressed tar, when declared
};

struct ImageManifest {
  std::string image_name;
  std::vector<LayerRef> layers;  // base first
  std::vector<std::string> config_env;
  std::optional<std::string> config_workdir;
};

enum class ImageFormat { oci_layout, docker_archive };

class BlobStore {
 public:
  virtual ~BlobStore() = default;
  // Raw bytes of a layer blob as stored (possibly compressed).
  // Throws Error(MissingBlob).
  virtual std::string read(const LayerRef& layer) const = 0;
};

struct Image {
  ImageFormat format;
  ImageManifest manifest;
  std::shared_ptr<const BlobStore> blobs;
};

// Throws Error(UnknownFormat) unless `input` is an OCI image-layout directory
// or a docker-save tar (plain or gzip).
ImageFormat detect_image_format(const std::filesystem::path& input);

// Parses and verifies an image input: every manifest, config and layer blob
// is hashed against its declared digest.
Image open_image(const std::filesystem::path& input);
ImageManifest parse_image(const std::filesystem::path& input);

// Replaces characters that cannot appear in a single path component.
std::string sanitize_image_name(std::string_view name);

// Decodes one layer blob (plain or gzip tar) into classified entries.
// Device nodes and FIFOs are dropped; a warning is appended to `warnings`
// (or logged if null). setuid/setgid bits are stripped.
std::vector<LayerEntry> decode_layer(std::string_view blob,
                                     std::vector<std::string>* warnings = nullptr);

// Applies one layer on top of `tree`. Whiteouts and opaque markers act on
// the lower layers only; regular entries then apply in order.
void apply_layer(FlattenedRootfs& tree, const std::vector<LayerEntry>& layer);

struct FlattenOptions {
  // Number of layers decoded ahead of the one being applied.
  unsigned decode_parallelism = 0;  // 0 = hardware concurrency
};

// Left fold of apply_layer over the manifest's layers.
FlattenedRootfs flatten(const ImageManifest& manifest, const BlobStore& blobs,
                        const FlattenOptions& options = {});
FlattenedRootfs flatten(const Image& image, const FlattenOptions& options = {});

// Metadata location inside the rootfs used by the runtime for image-config env.
inline constexpr std::string_view kMetadataDir = ".udss";
inline constexpr std::string_view kEnvironmentFile = ".udss/environment";
inline constexpr std::string_view kWorkdirFile = ".udss/workdir";

// Records the image config (Env, WorkingDir) as files under .udss/.
void add_image_metadata(FlattenedRootfs& tree, const ImageManifest& manifest);

}  // namespace udss
