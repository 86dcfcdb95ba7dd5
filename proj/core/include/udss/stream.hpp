#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>

namespace udss {

class ByteSource {
 public:
  virtual ~ByteSource() = default;
  // Reads up to `size` bytes; returns 0 only at end of stream.
  virtual std::size_t read(char* buffer, std::size_t size) = 0;
};

class ByteSink {
 public:
  virtual ~ByteSink() = default;
  virtual void write(std::string_view data) = 0;
};

class MemorySource final : public ByteSource {
 public:
  explicit MemorySource(std::string_view data) noexcept : data_(data) {}
  std::size_t read(char* buffer, std::size_t size) override;

 private:
  std::string_view data_;
  std::size_t offset_ = 0;
};

class StringSink final : public ByteSink {
 public:
  void write(std::string_view data) override { buffer_ += data; }
  const std::string& str() const noexcept { return buffer_; }
  std::string take() noexcept { return std::move(buffer_); }

 private:
  std::string buffer_;
};

// Reads a whole file into memory; throws Error(IoFailure).
std::string read_file(const std::filesystem::path& file);

// Writes `data` to `file`, replacing it.
void write_file(const std::filesystem::path& file, std::string_view data);

}  // namespace udss
