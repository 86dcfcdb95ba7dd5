#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "udss/stream.hpp"

namespace udss {

bool has_gzip_magic(std::string_view data) noexcept;
bool has_zstd_magic(std::string_view data) noexcept;

std::string gzip_compress(std::string_view data, int level = 6);
// Throws Error(MalformedArchive) on a corrupt stream.
std::string gzip_decompress(std::string_view data);

// Reads a gzip file, or a plain file transparently.
class GzipFileSource final : public ByteSource {
 public:
  explicit GzipFileSource(const std::filesystem::path& file);
  ~GzipFileSource() override;
  GzipFileSource(const GzipFileSource&) = delete;
  GzipFileSource& operator=(const GzipFileSource&) = delete;

  std::size_t read(char* buffer, std::size_t size) override;

 private:
  void* file_;
  std::string name_;
};

class GzipFileSink final : public ByteSink {
 public:
  GzipFileSink(const std::filesystem::path& file, int level);
  ~GzipFileSink() override;
  GzipFileSink(const GzipFileSink&) = delete;
  GzipFileSink& operator=(const GzipFileSink&) = delete;

  void write(std::string_view data) override;
  // Flushes the trailer; errors here are reported (unlike in the destructor).
  void close();

 private:
  void* file_;
  std::string name_;
};

}  // namespace udss
