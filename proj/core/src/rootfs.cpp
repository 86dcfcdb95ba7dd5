#include "udss/rootfs.hpp"

#include <sys/stat.h>

#include <unordered_map>

#include "udss/error.hpp"
#include "udss/log.hpp"
#include "udss/path.hpp"
#include "udss/stream.hpp"

namespace udss {

std::string_view to_string(NodeKind kind) noexcept {
  switch (kind) {
    case NodeKind::file: return "file";
    case NodeKind::directory: return "dir";
    case NodeKind::symlink: return "symlink";
  }
  return "?";
}

namespace {

// Iterator range of the keys strictly beneath `path`.
template <typename Map>
auto children_range(Map& tree, std::string_view path) {
  if (path.empty()) return std::make_pair(tree.begin(), tree.end());
  std::string prefix(path);
  prefix += '/';
  auto first = tree.lower_bound(prefix);
  auto last = first;
  while (last != tree.end() && last->first.starts_with(prefix)) ++last;
  return std::make_pair(first, last);
}

// Maps each inode to the smallest path that carries it. Inode 0 is never
// shared.
std::unordered_map<std::uint64_t, std::string_view> inode_leaders(const FlattenedRootfs::Tree& t) {
  std::unordered_map<std::uint64_t, std::string_view> leaders;
  for (const auto& [path, node] : t) {
    if (node.kind != NodeKind::directory && node.inode != 0) leaders.try_emplace(node.inode, path);
  }
  return leaders;
}

std::string_view leader_of(std::unordered_map<std::uint64_t, std::string_view>& leaders, std::string_view path,
                           const RootfsNode& node) {
  return node.inode == 0 ? path : leaders[node.inode];
}

}  // namespace

const RootfsNode* FlattenedRootfs::find(std::string_view path) const {
  auto it = tree_.find(path);
  return it == tree_.end() ? nullptr : &it->second;
}

void FlattenedRootfs::ensure_parents(std::string_view path) {
  std::string_view parent = parent_path(path);
  if (parent.empty()) return;
  auto it = tree_.find(parent);
  if (it != tree_.end()) {
    if (it->second.kind != NodeKind::directory) {
      throw Error(Errc::ConflictingKind, "'" + std::string(parent) + "' is a " +
                                             std::string(to_string(it->second.kind)) +
                                             ", cannot hold '" + std::string(path) + "'");
    }
    return;
  }
  ensure_parents(parent);
  RootfsNode dir;
  dir.kind = NodeKind::directory;
  dir.mode = 0755;
  dir.inode = allocate_inode();
  tree_.emplace(std::string(parent), std::move(dir));
}

void FlattenedRootfs::put(const std::string& path, RootfsNode node) {
  auto it = tree_.find(path);
  if (it != tree_.end()) {
    if (it->second.kind == NodeKind::directory && node.kind != NodeKind::directory) {
      erase_children(path);
    }
    it = tree_.find(path);
    it->second = std::move(node);
    return;
  }
  tree_.emplace(path, std::move(node));
}

void FlattenedRootfs::erase_children(std::string_view path) {
  auto [first, last] = children_range(tree_, path);
  tree_.erase(first, last);
}

void FlattenedRootfs::erase(std::string_view path) {
  auto it = tree_.find(path);
  if (it == tree_.end()) return;
  bool dir = it->second.kind == NodeKind::directory;
  tree_.erase(it);
  if (dir) erase_children(path);
}

std::uint64_t FlattenedRootfs::total_size_bytes() const {
  std::uint64_t total = 0;
  auto leaders = inode_leaders(tree_);
  for (const auto& [path, node] : tree_) {
    if (node.kind == NodeKind::file && leader_of(leaders, path, node) == path) total += node.data().size();
  }
  return total;
}

std::vector<std::string> FlattenedRootfs::differences(const FlattenedRootfs& a,
                                                      const FlattenedRootfs& b,
                                                      std::size_t limit) {
  std::vector<std::string> out;
  auto note = [&](std::string msg) {
    if (out.size() < limit) out.push_back(std::move(msg));
  };
  auto la = inode_leaders(a.tree_);
  auto lb = inode_leaders(b.tree_);
  auto ia = a.tree_.begin();
  auto ib = b.tree_.begin();
  while (ia != a.tree_.end() || ib != b.tree_.end()) {
    if (ib == b.tree_.end() || (ia != a.tree_.end() && ia->first < ib->first)) {
      note("only in left: " + ia->first);
      ++ia;
      continue;
    }
    if (ia == a.tree_.end() || ib->first < ia->first) {
      note("only in right: " + ib->first);
      ++ib;
      continue;
    }
    const auto& path = ia->first;
    const RootfsNode& x = ia->second;
    const RootfsNode& y = ib->second;
    if (x.kind != y.kind) {
      note(path + ": kind " + std::string(to_string(x.kind)) + " vs " +
           std::string(to_string(y.kind)));
    } else {
      if (x.mode != y.mode) {
        note(path + ": mode " + std::to_string(x.mode) + " vs " + std::to_string(y.mode));
      }
      if (x.mtime != y.mtime) {
        note(path + ": mtime " + std::to_string(x.mtime) + " vs " + std::to_string(y.mtime));
      }
      if (x.data() != y.data()) note(path + ": content differs");
      if (x.link_target != y.link_target) {
        note(path + ": link target '" + x.link_target + "' vs '" + y.link_target + "'");
      }
      if (x.kind != NodeKind::directory && leader_of(la, path, x) != leader_of(lb, path, y)) {
        note(path + ": hardlink group leader " + std::string(leader_of(la, path, x)) + " vs " +
             std::string(leader_of(lb, path, y)));
      }
    }
    ++ia;
    ++ib;
  }
  return out;
}

bool operator==(const FlattenedRootfs& a, const FlattenedRootfs& b) {
  return a.tree_.size() == b.tree_.size() && FlattenedRootfs::differences(a, b, 1).empty();
}

namespace {

void load_into(FlattenedRootfs& out, const std::filesystem::path& dir, const std::string& rel,
               std::unordered_map<std::uint64_t, std::uint64_t>& inodes) {
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    const auto host = entry.path();
    const std::string path = join_path(rel, host.filename().string());
    struct stat st {};
    if (::lstat(host.c_str(), &st) != 0) throw_errno(Errc::IoFailure, "lstat " + host.string());

    RootfsNode node;
    node.mode = st.st_mode & 01777;
    node.mtime = st.st_mtim.tv_sec;
    if (S_ISDIR(st.st_mode)) {
      node.kind = NodeKind::directory;
      node.inode = out.allocate_inode();
      out.put(path, std::move(node));
      load_into(out, host, path, inodes);
      continue;
    }
    if (S_ISREG(st.st_mode)) {
      node.kind = NodeKind::file;
      node.content = std::make_shared<const std::string>(read_file(host));
    } else if (S_ISLNK(st.st_mode)) {
      node.kind = NodeKind::symlink;
      node.link_target = std::filesystem::read_symlink(host).string();
    } else {
      log_warn("skipping special file " + host.string());
      continue;
    }
    std::uint64_t key = (static_cast<std::uint64_t>(st.st_dev) << 40) ^ st.st_ino;
    if (st.st_nlink > 1) {
      auto [it, fresh] = inodes.try_emplace(key, 0);
      if (fresh) it->second = out.allocate_inode();
      node.inode = it->second;
    } else {
      node.inode = out.allocate_inode();
    }
    out.put(path, std::move(node));
  }
  if (ec) throw Error(Errc::IoFailure, "cannot list " + dir.string() + ": " + ec.message());
}

}  // namespace

FlattenedRootfs load_directory(const std::filesystem::path& root) {
  std::error_code ec;
  if (!std::filesystem::is_directory(root, ec)) {
    throw Error(Errc::IoFailure, root.string() + " is not a directory");
  }
  FlattenedRootfs out;
  std::unordered_map<std::uint64_t, std::uint64_t> inodes;
  load_into(out, root, "", inodes);
  return out;
}

}  // namespace udss
