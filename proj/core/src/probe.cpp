#include <sched.h>
#include <sys/utsname.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fcntl.h>

#include <fstream>
#include <sstream>

#include "udss/runtime.hpp"

namespace udss {

namespace fs = std::filesystem;

namespace {

std::optional<std::string> read_first_line(const fs::path& file) {
  std::ifstream in(file);
  if (!in) return std::nullopt;
  std::string line;
  std::getline(in, line);
  return line;
}

std::optional<long> read_long(const fs::path& file) {
  auto line = read_first_line(file);
  if (!line) return std::nullopt;
  try {
    return std::stol(*line);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::pair<int, int> kernel_version(const std::string& release) {
  int major = 0;
  int minor = 0;
  char dot = 0;
  std::istringstream in(release);
  in >> major >> dot >> minor;
  return {major, minor};
}

bool live_unshare_works() {
  pid_t pid = ::fork();
  if (pid < 0) return false;
  if (pid == 0) {
    uid_t uid = ::geteuid();
    if (::unshare(CLONE_NEWUSER) != 0) ::_exit(1);
    std::string map = std::to_string(uid) + " " + std::to_string(uid) + " 1\n";
    int fd = ::open("/proc/self/uid_map", O_WRONLY | O_CLOEXEC);
    if (fd < 0) ::_exit(2);
    bool ok = ::write(fd, map.data(), map.size()) == static_cast<ssize_t>(map.size());
    ::close(fd);
    ::_exit(ok ? 0 : 3);
  }
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) return false;
  }
  return WIFEXITED(status) && WEXITSTATUS(status) == 0;
}

}  // namespace

CapabilityReport probe_support(const ProbeOptions& options) {
  const fs::path& proc = options.proc_root;
  CapabilityReport r;

  if (auto rel = read_first_line(proc / "sys/kernel/osrelease")) {
    r.kernel_release = *rel;
  } else {
    utsname u{};
    if (::uname(&u) == 0) r.kernel_release = u.release;
  }
  auto [major, minor] = kernel_version(r.kernel_release);
  r.max_uid_map_lines = (major > 4 || (major == 4 && minor >= 15)) ? 340 : 5;

  if (std::ifstream fsys{proc / "filesystems"}; fsys) {
    std::string line;
    while (std::getline(fsys, line)) {
      if (line.ends_with("\toverlay") || line == "overlay") r.overlay = true;
    }
  }

  if (auto map = read_first_line(proc / "self/uid_map")) {
    std::istringstream in(*map);
    unsigned long inside = 0, outside = 0, count = 0;
    in >> inside >> outside >> count;
    r.nested = !(inside == 0 && outside == 0 && count == 4294967295ul);
    r.nesting_depth = r.nested ? 1 : 0;
  }

  r.max_user_namespaces = read_long(proc / "sys/user/max_user_namespaces");

  r.user_namespaces = true;
  if (major < 3 || (major == 3 && minor < 8)) {
    r.user_namespaces = false;
    r.detail = "kernel " + r.kernel_release + " predates user namespaces (3.8)";
  } else if (auto clone = read_long(proc / "sys/kernel/unprivileged_userns_clone"); clone && *clone == 0) {
    r.user_namespaces = false;
    r.blocking_sysctl = "kernel.unprivileged_userns_clone";
    r.detail = "unprivileged user namespaces are disabled; set kernel.unprivileged_userns_clone=1";
  } else if (r.max_user_namespaces && *r.max_user_namespaces == 0) {
    r.user_namespaces = false;
    r.blocking_sysctl = "user.max_user_namespaces";
    r.detail = "user namespaces are disabled; set user.max_user_namespaces to a positive value";
  } else if (options.live_check && !live_unshare_works()) {
    r.user_namespaces = false;
    if (auto aa = read_long(proc / "sys/kernel/apparmor_restrict_unprivileged_userns"); aa && *aa == 1) {
      r.blocking_sysctl = "kernel.apparmor_restrict_unprivileged_userns";
      r.detail = "AppArmor restricts unprivileged user namespaces";
    } else {
      r.detail = "creating a user namespace failed (seccomp or security module policy?)";
    }
  } else {
    r.detail = options.live_check ? "user namespace created successfully"
                                  : "kernel settings permit user namespaces";
  }
  return r;
}

std::string format_report(const CapabilityReport& r) {
  std::ostringstream out;
  out << "kernel: " << r.kernel_release << "\n";
  out << "user namespaces: " << (r.user_namespaces ? "available" : "unavailable") << " (" << r.detail
      << ")\n";
  if (r.blocking_sysctl) out << "blocking sysctl: " << *r.blocking_sysctl << "\n";
  if (r.max_user_namespaces) out << "max user namespaces: " << *r.max_user_namespaces << "\n";
  out << "max uid map lines: " << r.max_uid_map_lines << "\n";
  out << "overlay filesystem: " << (r.overlay ? "yes" : "no") << "\n";
  if (r.nested) {
    out << "nesting: inside a user namespace (depth >= " << r.nesting_depth << ")\n";
  } else {
    out << "nesting: initial user namespace\n";
  }
  return out.str();
}

}  // namespace udss
