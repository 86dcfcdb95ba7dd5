#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "udss/rootfs.hpp"
#include "udss/tar.hpp"

namespace udss {

// A gzip-compressed pax tar holding exactly one top-level directory.
struct RootfsArchive {
  std::filesystem::path path;
  std::string top_level_name;
};

struct PackOptions {
  int compression_level = 6;
};

// Serializes `rootfs` under "<image_name>/". Entries are written in sorted
// path order; hardlink groups are emitted as one file plus link members.
// Throws EmptyRootfs, PathEscape (bad name) or IoFailure.
RootfsArchive pack(const FlattenedRootfs& rootfs, std::string_view image_name,
                   const std::filesystem::path& out_path, const PackOptions& options = {});

// Reads the first member to learn the top-level directory name.
RootfsArchive inspect_archive(const std::filesystem::path& archive);

// Extracts into dest/<top_level_name> and returns that path. Extraction goes
// through a staging directory beside the target and is renamed into place,
// so a failed unpack leaves nothing behind. Symlinks are never followed
// while creating entries.
// Throws DestCollision (target exists, overwrite false), PathEscape,
// MalformedArchive or IoFailure.
std::filesystem::path unpack(const RootfsArchive& archive, const std::filesystem::path& dest,
                             bool overwrite = false);

// Member headers in archive order.
std::vector<tar::Header> list_entries(const std::filesystem::path& archive);

// Re-reads an archive as a single layer, stripping the top-level directory.
FlattenedRootfs read_archive(const std::filesystem::path& archive);

}  // namespace udss
