#include "udss/archive.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <tuple>
#include <unordered_map>

#include "udss/error.hpp"
#include "udss/gzip.hpp"
#include "udss/image.hpp"
#include "udss/log.hpp"
#include "udss/path.hpp"

namespace udss {

namespace fs = std::filesystem;

namespace {

void check_top_level_name(std::string_view name) {
  if (name.empty() || name == "." || name == ".." || name.find('/') != std::string_view::npos) {
    throw Error(Errc::PathEscape, "invalid top-level directory name '" + std::string(name) + "'");
  }
}

class Fd {
 public:
  explicit Fd(int fd = -1) noexcept : fd_(fd) {}
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(Fd&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Fd& operator=(Fd&& other) noexcept {
    if (this != &other) {
      if (fd_ >= 0) ::close(fd_);
      fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;

  int get() const noexcept { return fd_; }

 private:
  int fd_;
};

Fd dup_fd(int fd) {
  int copy = ::fcntl(fd, F_DUPFD_CLOEXEC, 0);
  if (copy < 0) throw_errno(Errc::IoFailure, "dup");
  return Fd(copy);
}

// Opens the directory `rel` beneath `root` one component at a time, refusing
// to traverse symlinks. Missing components are created (0700) when `create`.
Fd open_dir_beneath(int root, std::string_view rel, bool create) {
  Fd cur = dup_fd(root);
  std::size_t pos = 0;
  while (pos < rel.size()) {
    std::size_t slash = rel.find('/', pos);
    if (slash == std::string_view::npos) slash = rel.size();
    std::string comp(rel.substr(pos, slash - pos));
    pos = slash + 1;
    int fd = ::openat(cur.get(), comp.c_str(), O_RDONLY | O_DIRECTORY | O_NOFOLLOW | O_CLOEXEC);
    if (fd < 0 && errno == ENOENT && create) {
      if (::mkdirat(cur.get(), comp.c_str(), 0700) != 0 && errno != EEXIST) {
        throw_errno(Errc::IoFailure, "mkdir " + std::string(rel.substr(0, slash)));
      }
      fd = ::openat(cur.get(), comp.c_str(), O_RDONLY | O_DIRECTORY | O_NOFOLLOW | O_CLOEXEC);
    }
    if (fd < 0) {
      if (errno == ELOOP || errno == ENOTDIR) {
        throw Error(Errc::PathEscape, "refusing to traverse non-directory '" +
                                          std::string(rel.substr(0, slash)) + "'");
      }
      if (errno == ENOENT) {
        throw Error(Errc::HardlinkTargetMissing, "no such directory '" + std::string(rel) + "'");
      }
      throw_errno(Errc::IoFailure, "open " + std::string(rel.substr(0, slash)));
    }
    cur = Fd(fd);
  }
  return cur;
}

// Removes whatever sits at `name` under `parent` unless it is a directory and
// `keep_dir` is set. Returns true when a directory was kept.
bool clear_slot(int parent, const std::string& name, const fs::path& host_path, bool keep_dir) {
  struct stat st {};
  if (::fstatat(parent, name.c_str(), &st, AT_SYMLINK_NOFOLLOW) != 0) {
    if (errno == ENOENT) return false;
    throw_errno(Errc::IoFailure, "stat " + host_path.string());
  }
  if (S_ISDIR(st.st_mode)) {
    if (keep_dir) return true;
    std::error_code ec;
    fs::remove_all(host_path, ec);
    if (ec) throw Error(Errc::IoFailure, "cannot remove " + host_path.string() + ": " + ec.message());
    return false;
  }
  if (::unlinkat(parent, name.c_str(), 0) != 0) throw_errno(Errc::IoFailure, "unlink " + host_path.string());
  return false;
}

void write_all(int fd, std::string_view data, const std::string& what) {
  while (!data.empty()) {
    ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno(Errc::IoFailure, "write " + what);
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

timespec seconds(std::int64_t t) { return timespec{static_cast<time_t>(t), 0}; }

// Splits "<top>/<rest>" and checks <top>; returns <rest> ("" for the top dir).
std::string strip_top(const std::string& raw, std::string_view top) {
  if (!raw.empty() && raw.front() == '/') {
    throw Error(Errc::PathEscape, "absolute path in archive: '" + raw + "'");
  }
  std::string norm = normalize_relative(raw);
  auto slash = norm.find('/');
  std::string_view first = std::string_view(norm).substr(0, slash);
  if (first != top) {
    throw Error(Errc::MalformedArchive, "member '" + raw + "' is outside top-level directory '" +
                                            std::string(top) + "'");
  }
  return slash == std::string::npos ? std::string() : norm.substr(slash + 1);
}

struct DirFixup {
  std::string rel;
  std::uint32_t mode;
  std::int64_t mtime;
};

}  // namespace

RootfsArchive pack(const FlattenedRootfs& rootfs, std::string_view image_name, const fs::path& out_path,
                   const PackOptions& options) {
  check_top_level_name(image_name);
  if (rootfs.empty()) throw Error(Errc::EmptyRootfs, "nothing to pack for '" + std::string(image_name) + "'");

  const std::string top(image_name);
  fs::path partial = out_path;
  partial += ".partial";
  try {
    GzipFileSink sink(partial, options.compression_level);
    tar::Writer writer(sink);

    tar::Header root;
    root.path = top + "/";
    root.type = tar::kDirectory;
    root.mode = 0755;
    writer.add(root);

    std::unordered_map<std::uint64_t, std::string> leaders;
    for (const auto& [path, node] : rootfs.tree()) {
      tar::Header h;
      h.path = top + "/" + path;
      h.mode = node.mode & 01777;
      h.mtime = node.mtime;
      switch (node.kind) {
        case NodeKind::directory:
          h.type = tar::kDirectory;
          h.path += '/';
          writer.add(h);
          break;
        case NodeKind::symlink:
        case NodeKind::file: {
          bool first = true;
          decltype(leaders.begin()) it;
          if (node.inode != 0) std::tie(it, first) = leaders.try_emplace(node.inode, h.path);
          if (!first) {
            h.type = tar::kHardlink;
            h.linkname = it->second;
            writer.add(h);
          } else if (node.kind == NodeKind::symlink) {
            h.type = tar::kSymlink;
            h.linkname = node.link_target;
            writer.add(h);
          } else {
            h.type = tar::kRegular;
            h.size = node.data().size();
            writer.add(h, node.data());
          }
          break;
        }
      }
    }
    writer.finish();
    sink.close();
    std::error_code ec;
    fs::rename(partial, out_path, ec);
    if (ec) throw Error(Errc::IoFailure, "cannot move archive into place: " + ec.message());
  } catch (...) {
    std::error_code ec;
    fs::remove(partial, ec);
    throw;
  }
  return RootfsArchive{out_path, top};
}

RootfsArchive inspect_archive(const fs::path& archive) {
  GzipFileSource source(archive);
  tar::Reader reader(source);
  auto first = reader.next();
  if (!first) throw Error(Errc::MalformedArchive, archive.string() + " is empty");
  if (!first->path.empty() && first->path.front() == '/') {
    throw Error(Errc::PathEscape, "absolute path in archive: '" + first->path + "'");
  }
  std::string norm = normalize_relative(first->path);
  std::string top = norm.substr(0, norm.find('/'));
  if (top.empty()) throw Error(Errc::MalformedArchive, archive.string() + " has no top-level directory");
  return RootfsArchive{archive, top};
}

fs::path unpack(const RootfsArchive& archive, const fs::path& dest, bool overwrite) {
  check_top_level_name(archive.top_level_name);
  std::error_code ec;
  if (!fs::is_directory(dest, ec)) {
    throw Error(Errc::IoFailure, "destination " + dest.string() + " is not a directory");
  }
  const fs::path target = dest / archive.top_level_name;
  const bool exists = fs::exists(fs::symlink_status(target, ec));
  if (exists && !overwrite) {
    throw Error(Errc::DestCollision,
                target.string() + " already exists; remove it or pass --overwrite to replace it");
  }

  const std::string tag = std::to_string(::getpid());
  const fs::path staging = dest / ("." + archive.top_level_name + ".partial-" + tag);
  fs::remove_all(staging, ec);
  if (::mkdir(staging.c_str(), 0700) != 0) throw_errno(Errc::IoFailure, "mkdir " + staging.string());

  try {
    Fd stage(::open(staging.c_str(), O_RDONLY | O_DIRECTORY | O_NOFOLLOW | O_CLOEXEC));
    if (stage.get() < 0) throw_errno(Errc::IoFailure, "open " + staging.string());

    GzipFileSource source(archive.path);
    tar::Reader reader(source);
    std::vector<DirFixup> dirs;
    DirFixup top_dir{"", 0755, 0};

    while (auto h = reader.next()) {
      std::string rel = strip_top(h->path, archive.top_level_name);
      if (rel.empty()) {
        if (h->type == tar::kDirectory) top_dir = DirFixup{"", h->mode & 01777, h->mtime};
        continue;
      }
      Fd parent = open_dir_beneath(stage.get(), parent_path(rel), true);
      const std::string name(base_name(rel));
      const fs::path host = staging / rel;
      const std::uint32_t mode = h->mode & 01777;
      const timespec times[2] = {seconds(h->mtime), seconds(h->mtime)};

      if (h->is_regular()) {
        clear_slot(parent.get(), name, host, false);
        Fd out(::openat(parent.get(), name.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_NOFOLLOW | O_CLOEXEC,
                        0600));
        if (out.get() < 0) throw_errno(Errc::IoFailure, "create " + rel);
        reader.read_payload([&](std::string_view chunk) { write_all(out.get(), chunk, rel); });
        if (::fchmod(out.get(), mode) != 0) throw_errno(Errc::IoFailure, "chmod " + rel);
        if (::futimens(out.get(), times) != 0) throw_errno(Errc::IoFailure, "utimens " + rel);
      } else if (h->type == tar::kDirectory) {
        if (!clear_slot(parent.get(), name, host, true) &&
            ::mkdirat(parent.get(), name.c_str(), 0700) != 0) {
          throw_errno(Errc::IoFailure, "mkdir " + rel);
        }
        dirs.push_back(DirFixup{rel, mode, h->mtime});
      } else if (h->type == tar::kSymlink) {
        clear_slot(parent.get(), name, host, false);
        if (::symlinkat(h->linkname.c_str(), parent.get(), name.c_str()) != 0) {
          throw_errno(Errc::IoFailure, "symlink " + rel);
        }
        if (::utimensat(parent.get(), name.c_str(), times, AT_SYMLINK_NOFOLLOW) != 0) {
          throw_errno(Errc::IoFailure, "utimens " + rel);
        }
      } else if (h->type == tar::kHardlink) {
        std::string target_rel = strip_top(h->linkname, archive.top_level_name);
        if (target_rel.empty()) throw Error(Errc::MalformedArchive, "hardlink to top directory: " + rel);
        if (target_rel == rel) continue;
        Fd target_parent = open_dir_beneath(stage.get(), parent_path(target_rel), false);
        const std::string target_name(base_name(target_rel));
        struct stat st {};
        if (::fstatat(target_parent.get(), target_name.c_str(), &st, AT_SYMLINK_NOFOLLOW) != 0) {
          throw Error(Errc::HardlinkTargetMissing, "hardlink " + rel + " -> " + target_rel + ": no target");
        }
        if (S_ISDIR(st.st_mode)) throw Error(Errc::MalformedArchive, "hardlink to directory: " + rel);
        clear_slot(parent.get(), name, host, false);
        if (::linkat(target_parent.get(), target_name.c_str(), parent.get(), name.c_str(), 0) != 0) {
          throw_errno(Errc::IoFailure, "link " + rel);
        }
      } else {
        log_warn("skipping special archive member " + h->path);
      }
    }

    // children sort after their parents, so reverse order fixes leaves first
    std::sort(dirs.begin(), dirs.end(), [](const DirFixup& a, const DirFixup& b) { return a.rel > b.rel; });
    dirs.push_back(top_dir);
    for (const auto& d : dirs) {
      Fd fd = open_dir_beneath(stage.get(), d.rel, false);
      const timespec times[2] = {seconds(d.mtime), seconds(d.mtime)};
      if (::fchmod(fd.get(), d.mode) != 0) throw_errno(Errc::IoFailure, "chmod " + d.rel);
      if (::futimens(fd.get(), times) != 0) throw_errno(Errc::IoFailure, "utimens " + d.rel);
    }

    if (exists) {
      const fs::path stale = dest / ("." + archive.top_level_name + ".stale-" + tag);
      fs::rename(target, stale);
      fs::rename(staging, target);
      fs::remove_all(stale, ec);
    } else {
      if (::renameat2(AT_FDCWD, staging.c_str(), AT_FDCWD, target.c_str(), RENAME_NOREPLACE) != 0) {
        if (errno == EEXIST) {
          throw Error(Errc::DestCollision, target.string() + " appeared while unpacking");
        }
        throw_errno(Errc::IoFailure, "rename into " + target.string());
      }
    }
  } catch (const fs::filesystem_error& e) {
    fs::remove_all(staging, ec);
    throw Error(Errc::IoFailure, e.what());
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
  return target;
}

std::vector<tar::Header> list_entries(const fs::path& archive) {
  GzipFileSource source(archive);
  tar::Reader reader(source);
  std::vector<tar::Header> out;
  while (auto h = reader.next()) out.push_back(std::move(*h));
  return out;
}

FlattenedRootfs read_archive(const fs::path& archive) {
  RootfsArchive info = inspect_archive(archive);
  GzipFileSource source(archive);
  tar::Reader reader(source);
  std::vector<LayerEntry> layer;
  while (auto h = reader.next()) {
    LayerEntry e;
    e.path = strip_top(h->path, info.top_level_name);
    if (e.path.empty()) continue;
    e.mode = h->mode & 01777;
    e.mtime = h->mtime;
    if (h->is_regular()) {
      e.kind = EntryKind::file;
      e.payload = reader.read_payload();
    } else if (h->type == tar::kDirectory) {
      e.kind = EntryKind::directory;
    } else if (h->type == tar::kSymlink) {
      e.kind = EntryKind::symlink;
      e.payload = h->linkname;
    } else if (h->type == tar::kHardlink) {
      e.kind = EntryKind::hardlink;
      e.payload = strip_top(h->linkname, info.top_level_name);
    } else {
      continue;
    }
    layer.push_back(std::move(e));
  }
  FlattenedRootfs tree;
  apply_layer(tree, layer);
  return tree;
}

}  // namespace udss
