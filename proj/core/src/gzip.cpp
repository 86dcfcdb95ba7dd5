#include "udss/gzip.hpp"

#include <zlib.h>

#include <climits>

#include "udss/error.hpp"

namespace udss {

bool has_gzip_magic(std::string_view data) noexcept {
  return data.size() >= 2 && static_cast<unsigned char>(data[0]) == 0x1f &&
         static_cast<unsigned char>(data[1]) == 0x8b;
}

bool has_zstd_magic(std::string_view data) noexcept {
  return data.size() >= 4 && static_cast<unsigned char>(data[0]) == 0x28 &&
         static_cast<unsigned char>(data[1]) == 0xb5 &&
         static_cast<unsigned char>(data[2]) == 0x2f &&
         static_cast<unsigned char>(data[3]) == 0xfd;
}

std::string gzip_compress(std::string_view data, int level) {
  z_stream zs{};
  if (deflateInit2(&zs, level, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw Error(Errc::IoFailure, "deflateInit2 failed");
  }
  std::string out;
  out.resize(deflateBound(&zs, static_cast<uLong>(data.size())) + 32);
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error(Errc::IoFailure, "gzip compression failed");
  out.resize(zs.total_out);
  return out;
}

std::string gzip_decompress(std::string_view data) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw Error(Errc::IoFailure, "inflateInit2 failed");
  std::string out;
  char buf[1 << 16];
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(buf);
    zs.avail_out = sizeof(buf);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw Error(Errc::MalformedArchive, "corrupt gzip stream");
    }
    out.append(buf, sizeof(buf) - zs.avail_out);
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw Error(Errc::MalformedArchive, "truncated gzip stream");
    }
  }
  inflateEnd(&zs);
  return out;
}

GzipFileSource::GzipFileSource(const std::filesystem::path& file)
    : file_(gzopen(file.c_str(), "rb")), name_(file.string()) {
  if (file_ == nullptr) throw_errno(Errc::IoFailure, "cannot open " + name_);
  gzbuffer(static_cast<gzFile>(file_), 1 << 17);
}

GzipFileSource::~GzipFileSource() { gzclose_r(static_cast<gzFile>(file_)); }

std::size_t GzipFileSource::read(char* buffer, std::size_t size) {
  if (size > INT_MAX) size = INT_MAX;
  int n = gzread(static_cast<gzFile>(file_), buffer, static_cast<unsigned>(size));
  if (n < 0) {
    int err = 0;
    const char* msg = gzerror(static_cast<gzFile>(file_), &err);
    throw Error(Errc::MalformedArchive, name_ + ": " + (msg ? msg : "read error"));
  }
  return static_cast<std::size_t>(n);
}

GzipFileSink::GzipFileSink(const std::filesystem::path& file, int level) : name_(file.string()) {
  if (level < 0 || level > 9) throw Error(Errc::IoFailure, "gzip level must be 0..9");
  std::string mode = "wb" + std::to_string(level);
  file_ = gzopen(file.c_str(), mode.c_str());
  if (file_ == nullptr) throw_errno(Errc::IoFailure, "cannot create " + name_);
  gzbuffer(static_cast<gzFile>(file_), 1 << 17);
}

GzipFileSink::~GzipFileSink() {
  if (file_ != nullptr) gzclose_w(static_cast<gzFile>(file_));
}

void GzipFileSink::write(std::string_view data) {
  while (!data.empty()) {
    unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(data.size(), 1u << 30));
    int n = gzwrite(static_cast<gzFile>(file_), data.data(), chunk);
    if (n <= 0) throw_errno(Errc::IoFailure, "write to " + name_);
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

void GzipFileSink::close() {
  if (file_ == nullptr) return;
  int rc = gzclose_w(static_cast<gzFile>(file_));
  file_ = nullptr;
  if (rc != Z_OK) throw Error(Errc::IoFailure, "cannot finish " + name_);
}

}  // namespace udss
