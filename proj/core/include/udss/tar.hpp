#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "udss/stream.hpp"

namespace udss::tar {

inline constexpr char kRegular = '0';
inline constexpr char kRegularOld = '\0';
inline constexpr char kHardlink = '1';
inline constexpr char kSymlink = '2';
inline constexpr char kCharDevice = '3';
inline constexpr char kBlockDevice = '4';
inline constexpr char kDirectory = '5';
inline constexpr char kFifo = '6';
inline constexpr char kContiguous = '7';

// One archive member after pax / GNU long-name records have been folded in.
struct Header {
  std::string path;
  char type = kRegular;
  std::uint32_t mode = 0644;
  std::int64_t mtime = 0;
  std::uint64_t size = 0;
  std::string linkname;

  bool is_regular() const noexcept {
    return type == kRegular || type == kRegularOld || type == kContiguous;
  }
};

// Streaming reader for ustar, pax and GNU tar. Throws Error(MalformedArchive).
class Reader {
 public:
  explicit Reader(ByteSource& source) : source_(source) {}

  // Advances to the next member, skipping any unread payload of the current one.
  std::optional<Header> next();

  // Delivers the current member's payload in chunks.
  void read_payload(const std::function<void(std::string_view)>& sink);
  std::string read_payload();

  // Bytes consumed from the source so far (payload of the current member
  // starts here right after next() returns).
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  void read_exact(char* buffer, std::size_t size);
  void skip(std::uint64_t size);
  std::string read_blob(std::uint64_t size);

  ByteSource& source_;
  std::uint64_t remaining_ = 0;  // unread payload bytes
  std::uint64_t padding_ = 0;    // block padding after the payload
  std::uint64_t offset_ = 0;
  bool done_ = false;
};

// Writes POSIX pax archives: plain ustar headers, preceded by a pax extended
// header only when a field does not fit. Ownership fields are always zero.
class Writer {
 public:
  explicit Writer(ByteSink& sink) : sink_(sink) {}

  // For regular files header.size must equal data.size().
  void add(const Header& header, std::string_view data = {});
  // Writes the end-of-archive marker.
  void finish();

 private:
  void write_block_header(const Header& header, std::string_view name,
                          std::string_view linkname, bool size_in_pax, bool mtime_in_pax);
  void write_padded(std::string_view data);

  ByteSink& sink_;
};

}  // namespace udss::tar
