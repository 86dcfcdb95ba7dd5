#pragma once

#include <sys/types.h>

#include <string>
#include <vector>

namespace udss::detail {

// Anonymous in-memory file used to capture a child's output without the
// pipe-buffer deadlock a blocking wait would otherwise risk.
class CaptureFile {
 public:
  CaptureFile();
  ~CaptureFile();
  CaptureFile(const CaptureFile&) = delete;
  CaptureFile& operator=(const CaptureFile&) = delete;

  int fd() const noexcept { return fd_; }
  std::string contents() const;

 private:
  int fd_;
};

// posix_spawnp with stdout/stderr sent to `out_fd`; throws ExecNotFound.
pid_t spawn_native(const std::vector<std::string>& argv, int out_fd);

int decode_wait_status(int status) noexcept;

// Free memory (MemFree) in bytes from /proc/meminfo; 0 if unreadable.
unsigned long long free_memory_bytes();

}  // namespace udss::detail
