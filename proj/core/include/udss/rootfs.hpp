#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace udss {

enum class NodeKind { file, directory, symlink };

std::string_view to_string(NodeKind kind) noexcept;

// One path in a flattened tree. Hardlinked paths share a non-zero `inode`
// (0 means not linked); their data is identical because nodes are only ever
// replaced, never edited in place.
struct RootfsNode {
  NodeKind kind = NodeKind::file;
  std::uint32_t mode = 0644;  // permission bits only (07777 mask)
  std::int64_t mtime = 0;
  std::string link_target;                    // symlinks
  std::shared_ptr<const std::string> content;  // regular files
  std::uint64_t inode = 0;

  std::string_view data() const noexcept {
    return content ? std::string_view(*content) : std::string_view{};
  }
};

// The squashed filesystem tree produced by flattening. Keys are normalized
// root-relative paths; the root itself is implicit. Invariants: every key's
// parent is a directory key (or the root), and no whiteout artefacts appear.
class FlattenedRootfs {
 public:
  using Tree = std::map<std::string, RootfsNode, std::less<>>;

  const Tree& tree() const noexcept { return tree_; }
  bool empty() const noexcept { return tree_.empty(); }
  std::size_t size() const noexcept { return tree_.size(); }

  const RootfsNode* find(std::string_view path) const;

  // Inserts or replaces `path`. Replacing a directory with a non-directory
  // drops its subtree. The parent must already be a directory.
  void put(const std::string& path, RootfsNode node);

  // Ensures every ancestor of `path` exists as a directory, creating missing
  // ones with mode 0755. Throws ConflictingKind if an ancestor is not a dir.
  void ensure_parents(std::string_view path);

  // Removes `path` and, for directories, everything beneath it.
  void erase(std::string_view path);
  // Removes everything beneath `path` but keeps `path`.
  void erase_children(std::string_view path);

  std::uint64_t allocate_inode() noexcept { return next_inode_++; }

  // Sum of regular-file sizes, counting each hardlinked inode once.
  std::uint64_t total_size_bytes() const;

  // Structural equality: paths, kinds, modes, mtimes, contents, link targets
  // and the partition of paths into hardlink groups. Inode numbers themselves
  // are not compared.
  friend bool operator==(const FlattenedRootfs& a, const FlattenedRootfs& b);

  // Human-readable list of the first `limit` differences, for diagnostics.
  static std::vector<std::string> differences(const FlattenedRootfs& a, const FlattenedRootfs& b,
                                              std::size_t limit = 10);

 private:
  Tree tree_;
  std::uint64_t next_inode_ = 1;
};

// Reads an unpacked directory tree from disk. Device nodes, FIFOs and sockets
// are skipped with a warning; setuid/setgid bits are dropped.
FlattenedRootfs load_directory(const std::filesystem::path& root);

}  // namespace udss
