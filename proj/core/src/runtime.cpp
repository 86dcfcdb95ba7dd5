#include "udss/runtime.hpp"

#include <fcntl.h>
#include <linux/openat2.h>
#include <sched.h>
#include <sys/mount.h>
#include <sys/prctl.h>
#include <sys/stat.h>
#include <sys/statvfs.h>
#include <sys/syscall.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "subprocess.hpp"
#include "udss/error.hpp"
#include "udss/image.hpp"
#include "udss/log.hpp"

extern char** environ;

namespace udss {

namespace fs = std::filesystem;

std::string_view to_string(EnvPolicy policy) noexcept {
  switch (policy) {
    case EnvPolicy::inherit_host: return "inherit-host";
    case EnvPolicy::image_config: return "image-config";
    case EnvPolicy::merged: return "merged";
  }
  return "?";
}

EnvPolicy parse_env_policy(std::string_view text) {
  if (text == "inherit-host") return EnvPolicy::inherit_host;
  if (text == "image-config") return EnvPolicy::image_config;
  if (text == "merged") return EnvPolicy::merged;
  throw Error(Errc::InvalidConfig, "unknown env policy '" + std::string(text) +
                                       "' (expected inherit-host, image-config or merged)");
}

BindMount parse_bind(std::string_view text) {
  auto colon = text.find(':');
  std::string src(text.substr(0, colon));
  std::string dst = colon == std::string_view::npos ? src : std::string(text.substr(colon + 1));
  if (src.empty() || dst.empty()) throw Error(Errc::InvalidConfig, "bad bind '" + std::string(text) + "'");
  if (dst.front() != '/') {
    throw Error(Errc::InvalidConfig, "bind destination must be absolute: '" + dst + "'");
  }
  return BindMount{src, dst};
}

IdentityMap IdentityMap::current() noexcept {
  uid_t uid = ::geteuid();
  gid_t gid = ::getegid();
  return IdentityMap{uid, gid, uid, gid};
}

std::string IdentityMap::uid_map() const {
  return std::to_string(container_uid) + " " + std::to_string(host_uid) + " 1\n";
}

std::string IdentityMap::gid_map() const {
  return std::to_string(container_gid) + " " + std::to_string(host_gid) + " 1\n";
}

void validate(const ContainerSpec& spec) {
  std::error_code ec;
  if (spec.rootfs.empty() || !fs::is_directory(spec.rootfs, ec)) {
    throw Error(Errc::RootfsMissing, "image directory '" + spec.rootfs.string() + "' does not exist");
  }
  for (const auto& b : spec.binds) {
    if (!fs::exists(b.host_path, ec)) {
      throw Error(Errc::BindSourceMissing, "bind source '" + b.host_path.string() + "' does not exist");
    }
  }
  if (spec.command.empty() || spec.command.front().empty()) {
    throw Error(Errc::RuntimeSetupFailed, "no command given");
  }
}

std::vector<PlannedBind> planned_binds(const ContainerSpec& spec) {
  std::vector<PlannedBind> out;
  if (spec.default_binds) {
    for (const char* p : {"/dev", "/proc", "/sys"}) out.push_back({{p, p}, false});
    if (const char* home = std::getenv("HOME"); home && *home && std::string_view(home) != "/") {
      out.push_back({{home, home}, false});
    }
    for (const auto& d : spec.site_bind_dirs) out.push_back({{d, d}, false});
  }
  for (const auto& b : spec.binds) out.push_back({b, true});
  return out;
}

std::vector<std::string> container_environment(EnvPolicy policy, const std::vector<std::string>& host_env,
                                               const std::vector<std::string>& image_env) {
  if (policy == EnvPolicy::inherit_host) return host_env;
  if (policy == EnvPolicy::image_config) return image_env;
  // merged: host first, image values override by key, order of first appearance kept
  std::vector<std::string> out;
  std::map<std::string, std::size_t> index;
  auto add = [&](const std::string& kv) {
    std::string key = kv.substr(0, kv.find('='));
    auto [it, fresh] = index.try_emplace(key, out.size());
    if (fresh) {
      out.push_back(kv);
    } else {
      out[it->second] = kv;
    }
  };
  for (const auto& kv : host_env) add(kv);
  for (const auto& kv : image_env) add(kv);
  return out;
}

namespace {

class Fd {
 public:
  explicit Fd(int fd = -1) noexcept : fd_(fd) {}
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const noexcept { return fd_; }

 private:
  int fd_;
};

void write_proc(const char* file, const std::string& content) {
  int fd = ::open(file, O_WRONLY | O_CLOEXEC);
  if (fd < 0) throw_errno(Errc::RuntimeSetupFailed, std::string("open ") + file);
  ssize_t n = ::write(fd, content.data(), content.size());
  int err = errno;
  ::close(fd);
  if (n != static_cast<ssize_t>(content.size())) {
    throw_errno(Errc::RuntimeSetupFailed, std::string("write ") + file, err);
  }
}

int openat2_in_root(int root, const std::string& rel, int flags) {
  open_how how{};
  how.flags = static_cast<std::uint64_t>(flags | O_CLOEXEC);
  how.resolve = RESOLVE_IN_ROOT | RESOLVE_NO_MAGICLINKS;
  return static_cast<int>(::syscall(SYS_openat2, root, rel.c_str(), &how, sizeof(how)));
}

std::string relative_in_root(const fs::path& container_path) {
  std::string rel = container_path.lexically_normal().relative_path().string();
  while (!rel.empty() && rel.back() == '/') rel.pop_back();
  return rel.empty() ? "." : rel;
}

// Resolves `container_path` inside the image with symlinks interpreted
// relative to the image root. Creates missing components when `create`,
// ending in a directory or an empty file as `want_dir` says. Returns an
// O_PATH fd, or -1 when the target is absent and not created.
int resolve_target(int root, const fs::path& container_path, bool want_dir, bool create) {
  const std::string rel = relative_in_root(container_path);
  int fd = openat2_in_root(root, rel, O_PATH);
  if (fd >= 0 || errno != ENOENT || !create) return fd;

  std::string prefix;
  std::stringstream parts(rel);
  std::string comp;
  std::vector<std::string> comps;
  while (std::getline(parts, comp, '/')) {
    if (!comp.empty()) comps.push_back(comp);
  }
  for (std::size_t i = 0; i < comps.size(); ++i) {
    std::string parent = prefix.empty() ? "." : prefix;
    prefix = prefix.empty() ? comps[i] : prefix + "/" + comps[i];
    int probe = openat2_in_root(root, prefix, O_PATH);
    if (probe >= 0) {
      ::close(probe);
      continue;
    }
    if (errno != ENOENT) return -1;
    Fd dir(openat2_in_root(root, parent, O_PATH | O_DIRECTORY));
    if (dir.get() < 0) return -1;
    bool last = i + 1 == comps.size();
    if (last && !want_dir) {
      int f = ::openat(dir.get(), comps[i].c_str(), O_CREAT | O_EXCL | O_WRONLY | O_NOFOLLOW | O_CLOEXEC, 0644);
      if (f < 0) return -1;
      ::close(f);
    } else if (::mkdirat(dir.get(), comps[i].c_str(), 0755) != 0 && errno != EEXIST) {
      return -1;
    }
  }
  return openat2_in_root(root, rel, O_PATH);
}

unsigned long locked_flags(const fs::path& mount_point) {
  struct statvfs sv {};
  if (::statvfs(mount_point.c_str(), &sv) != 0) return 0;
  unsigned long flags = 0;
  if (sv.f_flag & ST_NOSUID) flags |= MS_NOSUID;
  if (sv.f_flag & ST_NODEV) flags |= MS_NODEV;
  if (sv.f_flag & ST_NOEXEC) flags |= MS_NOEXEC;
  if (sv.f_flag & ST_NOATIME) flags |= MS_NOATIME;
  if (sv.f_flag & ST_NODIRATIME) flags |= MS_NODIRATIME;
  if (sv.f_flag & ST_RELATIME) flags |= MS_RELATIME;
  return flags;
}

std::vector<std::string> read_lines(const fs::path& file) {
  std::vector<std::string> out;
  std::ifstream in(file);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.find('=') != std::string::npos) out.push_back(line);
  }
  return out;
}

std::vector<std::string> host_environment() {
  std::vector<std::string> out;
  for (char** e = environ; e && *e; ++e) out.emplace_back(*e);
  return out;
}

void unshare_namespaces() {
  if (::unshare(CLONE_NEWUSER | CLONE_NEWNS) == 0) return;
  int err = errno;
  std::string hint;
  if (err == EINVAL) {
    hint = " (the calling process must be single-threaded)";
  } else {
    hint = "; check that the kernel allows unprivileged user namespaces "
           "(sysctl kernel.unprivileged_userns_clone=1, user.max_user_namespaces>0)";
  }
  throw Error(Errc::NoUserNamespaces,
              std::string("cannot create user namespace: ") + std::strerror(err) + hint);
}

}  // namespace

void enter(const ContainerSpec& spec) {
  validate(spec);
  const fs::path root = fs::canonical(spec.rootfs);
  const IdentityMap ids = IdentityMap::current();
  const auto host_env = host_environment();

  unshare_namespaces();
  write_proc("/proc/self/setgroups", "deny");
  write_proc("/proc/self/uid_map", ids.uid_map());
  write_proc("/proc/self/gid_map", ids.gid_map());

  if (::mount(nullptr, "/", nullptr, MS_REC | MS_PRIVATE, nullptr) != 0) {
    throw_errno(Errc::RuntimeSetupFailed, "make mounts private");
  }
  if (::mount(root.c_str(), root.c_str(), nullptr, MS_BIND | MS_REC, nullptr) != 0) {
    throw_errno(Errc::RuntimeSetupFailed, "bind image root " + root.string());
  }

  {
    Fd root_fd(::open(root.c_str(), O_PATH | O_DIRECTORY | O_CLOEXEC));
    if (root_fd.get() < 0) throw_errno(Errc::RootfsMissing, "open " + root.string());
    for (const auto& planned : planned_binds(spec)) {
      const auto& b = planned.mount;
      std::error_code ec;
      auto status = fs::status(b.host_path, ec);
      if (!fs::exists(status)) {
        if (planned.required) {
          throw Error(Errc::BindSourceMissing, "bind source '" + b.host_path.string() + "' does not exist");
        }
        log_debug("skipping default bind " + b.host_path.string() + ": not on host");
        continue;
      }
      bool want_dir = fs::is_directory(status);
      Fd target(resolve_target(root_fd.get(), b.container_path, want_dir, spec.writable));
      if (target.get() < 0) {
        if (planned.required) {
          throw Error(Errc::BindTargetMissing,
                      "bind target '" + b.container_path.string() +
                          "' does not exist in the image (create it, or use -w to let the runtime create it)");
        }
        log_debug("skipping default bind " + b.container_path.string() + ": no mount point in image");
        continue;
      }
      const std::string via = "/proc/self/fd/" + std::to_string(target.get());
      if (::mount(b.host_path.c_str(), via.c_str(), nullptr, MS_BIND | MS_REC, nullptr) != 0) {
        throw_errno(Errc::RuntimeSetupFailed,
                    "bind " + b.host_path.string() + " -> " + b.container_path.string());
      }
    }
  }

  if (!spec.writable) {
    unsigned long flags = MS_REMOUNT | MS_BIND | MS_RDONLY | locked_flags(root);
    if (::mount(nullptr, root.c_str(), nullptr, flags, nullptr) != 0) {
      throw_errno(Errc::RuntimeSetupFailed, "remount image read-only");
    }
  }

  if (::chdir(root.c_str()) != 0) throw_errno(Errc::RuntimeSetupFailed, "chdir " + root.string());
  if (::syscall(SYS_pivot_root, ".", ".") != 0) throw_errno(Errc::RuntimeSetupFailed, "pivot_root");
  if (::umount2(".", MNT_DETACH) != 0) throw_errno(Errc::RuntimeSetupFailed, "detach host root");
  if (::chdir("/") != 0) throw_errno(Errc::RuntimeSetupFailed, "chdir /");

  if (::prctl(PR_SET_NO_NEW_PRIVS, 1, 0, 0, 0) != 0) {
    throw_errno(Errc::RuntimeSetupFailed, "PR_SET_NO_NEW_PRIVS");
  }

  fs::path workdir = "/";
  if (spec.workdir) {
    workdir = *spec.workdir;
  } else if (std::ifstream wd{"/" + std::string(kWorkdirFile)}; wd) {
    std::string line;
    if (std::getline(wd, line) && !line.empty()) workdir = line;
  }
  if (::chdir(workdir.c_str()) != 0) {
    throw_errno(Errc::RuntimeSetupFailed, "working directory " + workdir.string());
  }

  const auto image_env = read_lines("/" + std::string(kEnvironmentFile));
  const auto env = container_environment(spec.env_policy, host_env, image_env);
  ::clearenv();
  for (const auto& kv : env) {
    auto eq = kv.find('=');
    ::setenv(kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str(), 1);
  }
}

void exec(const ContainerSpec& spec) {
  enter(spec);
  std::vector<char*> argv;
  for (const auto& a : spec.command) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  ::execvp(argv[0], argv.data());
  int err = errno;
  if (err == ENOENT || err == ENOTDIR) {
    throw Error(Errc::ExecNotFound, "'" + spec.command.front() + "' not found in image");
  }
  throw_errno(Errc::RuntimeSetupFailed, "exec " + spec.command.front(), err);
}

pid_t spawn(const ContainerSpec& spec, const StdioRedirect& io) {
  validate(spec);
  int report[2];
  if (::pipe2(report, O_CLOEXEC) != 0) throw_errno(Errc::RuntimeSetupFailed, "pipe");
  pid_t pid = ::fork();
  if (pid < 0) {
    int err = errno;
    ::close(report[0]);
    ::close(report[1]);
    throw_errno(Errc::RuntimeSetupFailed, "fork", err);
  }
  if (pid == 0) {
    ::close(report[0]);
    if (io.in >= 0) ::dup2(io.in, STDIN_FILENO);
    if (io.out >= 0) ::dup2(io.out, STDOUT_FILENO);
    if (io.err >= 0) ::dup2(io.err, STDERR_FILENO);
    Errc code = Errc::RuntimeSetupFailed;
    std::string message = "unknown failure";
    try {
      exec(spec);
    } catch (const Error& e) {
      code = e.code();
      message = e.message();
    } catch (const std::exception& e) {
      message = e.what();
    }
    std::string wire = std::to_string(static_cast<int>(code)) + "\n" + message;
    [[maybe_unused]] auto n = ::write(report[1], wire.data(), wire.size());
    ::_exit(125);
  }
  ::close(report[1]);
  std::string wire;
  char buf[512];
  for (;;) {
    ssize_t n = ::read(report[0], buf, sizeof(buf));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    wire.append(buf, static_cast<std::size_t>(n));
  }
  ::close(report[0]);
  if (!wire.empty()) {
    wait_exit(pid);
    auto nl = wire.find('\n');
    auto code = static_cast<Errc>(std::stoi(wire.substr(0, nl)));
    throw Error(code, nl == std::string::npos ? std::string() : wire.substr(nl + 1));
  }
  return pid;
}

int wait_exit(pid_t pid) {
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) throw_errno(Errc::RuntimeSetupFailed, "waitpid");
  }
  return detail::decode_wait_status(status);
}

int run(const ContainerSpec& spec, const StdioRedirect& io) { return wait_exit(spawn(spec, io)); }

}  // namespace udss
