#include "udss/stream.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "udss/error.hpp"

namespace udss {

std::size_t MemorySource::read(char* buffer, std::size_t size) {
  std::size_t n = std::min(size, data_.size() - offset_);
  std::memcpy(buffer, data_.data() + offset_, n);
  offset_ += n;
  return n;
}

std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + file.string());
  std::string out;
  std::string buf(1 << 16, '\0');
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    out.append(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  if (in.bad()) throw Error(Errc::IoFailure, "read error on " + file.string());
  return out;
}

void write_file(const std::filesystem::path& file, std::string_view data) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  out.close();
  if (!out) throw Error(Errc::IoFailure, "cannot write " + file.string());
}

}  // namespace udss
