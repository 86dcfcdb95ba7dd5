#include "subprocess.hpp"

#include <spawn.h>
#include <sys/mman.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstring>

#include "udss/error.hpp"

extern char** environ;

namespace udss::detail {

CaptureFile::CaptureFile() : fd_(::memfd_create("udss-capture", MFD_CLOEXEC)) {
  if (fd_ < 0) throw_errno(Errc::IoFailure, "memfd_create");
}

CaptureFile::~CaptureFile() { ::close(fd_); }

std::string CaptureFile::contents() const {
  std::string out;
  char buf[1 << 14];
  off_t offset = 0;
  for (;;) {
    ssize_t n = ::pread(fd_, buf, sizeof(buf), offset);
    if (n < 0) throw_errno(Errc::IoFailure, "read captured output");
    if (n == 0) break;
    out.append(buf, static_cast<std::size_t>(n));
    offset += n;
  }
  return out;
}

pid_t spawn_native(const std::vector<std::string>& argv, int out_fd) {
  if (argv.empty()) throw Error(Errc::ExecNotFound, "empty command");
  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, out_fd, STDOUT_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_fd, STDERR_FILENO);
  pid_t pid = -1;
  int rc = ::posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) {
    throw Error(Errc::ExecNotFound, "cannot start '" + argv[0] + "': " + std::strerror(rc));
  }
  return pid;
}

int decode_wait_status(int status) noexcept {
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
  return 255;
}

unsigned long long free_memory_bytes() {
  std::FILE* f = std::fopen("/proc/meminfo", "re");
  if (f == nullptr) return 0;
  char line[256];
  unsigned long long kb = 0;
  while (std::fgets(line, sizeof(line), f)) {
    if (std::sscanf(line, "MemFree: %llu kB", &kb) == 1) break;
  }
  std::fclose(f);
  return kb * 1024ull;
}

}  // namespace udss::detail
