#include "udss/tar.hpp"

#include <algorithm>
#include <array>
#include <cstring>

#include "udss/error.hpp"

namespace udss::tar {
namespace {

constexpr std::size_t kBlock = 512;

std::uint64_t padding_for(std::uint64_t size) {
  return (kBlock - size % kBlock) % kBlock;
}

std::string_view field(const char* block, std::size_t offset, std::size_t length) {
  std::string_view f(block + offset, length);
  auto nul = f.find('\0');
  return nul == std::string_view::npos ? f : f.substr(0, nul);
}

std::uint64_t parse_number(const char* block, std::size_t offset, std::size_t length) {
  const auto* p = reinterpret_cast<const unsigned char*>(block + offset);
  if (p[0] & 0x80) {
    // base-256, big endian, first byte's high bit is the marker
    std::uint64_t value = p[0] & 0x3f;
    for (std::size_t i = 1; i < length; ++i) value = (value << 8) | p[i];
    return value;
  }
  std::uint64_t value = 0;
  std::size_t i = 0;
  while (i < length && (p[i] == ' ' || p[i] == '\0')) ++i;
  for (; i < length && p[i] >= '0' && p[i] <= '7'; ++i) value = value * 8 + (p[i] - '0');
  for (; i < length; ++i) {
    if (p[i] != ' ' && p[i] != '\0') {
      throw Error(Errc::MalformedArchive, "bad numeric field in tar header");
    }
  }
  return value;
}

bool verify_checksum(const char* block) {
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < kBlock; ++i) {
    sum += (i >= 148 && i < 156) ? ' ' : static_cast<unsigned char>(block[i]);
  }
  return sum == parse_number(block, 148, 8);
}

struct PaxRecords {
  std::optional<std::string> path;
  std::optional<std::string> linkpath;
  std::optional<std::uint64_t> size;
  std::optional<std::int64_t> mtime;
};

void parse_pax(std::string_view data, PaxRecords& out) {
  while (!data.empty()) {
    auto space = data.find(' ');
    if (space == std::string_view::npos) throw Error(Errc::MalformedArchive, "bad pax record");
    std::size_t len = 0;
    for (char c : data.substr(0, space)) {
      if (c < '0' || c > '9') throw Error(Errc::MalformedArchive, "bad pax record length");
      len = len * 10 + static_cast<std::size_t>(c - '0');
    }
    if (len <= space + 1 || len > data.size() || data[len - 1] != '\n') {
      throw Error(Errc::MalformedArchive, "bad pax record length");
    }
    std::string_view record = data.substr(space + 1, len - space - 2);
    data.remove_prefix(len);
    auto eq = record.find('=');
    if (eq == std::string_view::npos) throw Error(Errc::MalformedArchive, "bad pax record");
    auto key = record.substr(0, eq);
    auto value = record.substr(eq + 1);
    if (key == "path") {
      out.path = std::string(value);
    } else if (key == "linkpath") {
      out.linkpath = std::string(value);
    } else if (key == "size") {
      out.size = std::stoull(std::string(value));
    } else if (key == "mtime") {
      // may carry a fractional part; whole seconds are kept
      out.mtime = static_cast<std::int64_t>(std::stoll(std::string(value.substr(0, value.find('.')))));
    }
  }
}

void put_octal(char* block, std::size_t offset, std::size_t length, std::uint64_t value) {
  // length-1 digits followed by NUL
  std::string digits(length - 1, '0');
  for (std::size_t i = length - 1; i-- > 0;) {
    digits[i] = static_cast<char>('0' + (value & 7));
    value >>= 3;
  }
  std::memcpy(block + offset, digits.data(), length - 1);
  block[offset + length - 1] = '\0';
}

std::string pax_record(std::string_view key, std::string_view value) {
  // "<len> key=value\n" where len counts itself
  std::size_t body = key.size() + value.size() + 3;  // ' ', '=', '\n'
  std::size_t len = body + 1;
  while (std::to_string(len).size() + body != len) ++len;
  return std::to_string(len) + " " + std::string(key) + "=" + std::string(value) + "\n";
}

constexpr std::uint64_t kMaxOctal11 = (1ull << 33) - 1;  // 8^11 - 1

}  // namespace

void Reader::read_exact(char* buffer, std::size_t size) {
  std::size_t got = 0;
  while (got < size) {
    std::size_t n = source_.read(buffer + got, size - got);
    if (n == 0) throw Error(Errc::MalformedArchive, "unexpected end of tar stream");
    got += n;
  }
  offset_ += size;
}

void Reader::skip(std::uint64_t size) {
  char buf[8192];
  while (size > 0) {
    auto chunk = static_cast<std::size_t>(std::min<std::uint64_t>(size, sizeof(buf)));
    read_exact(buf, chunk);
    size -= chunk;
  }
}

std::string Reader::read_blob(std::uint64_t size) {
  if (size > (1ull << 26)) throw Error(Errc::MalformedArchive, "oversized tar metadata record");
  std::string out(static_cast<std::size_t>(size), '\0');
  read_exact(out.data(), out.size());
  skip(padding_for(size));
  return out;
}

std::optional<Header> Reader::next() {
  if (done_) return std::nullopt;
  skip(remaining_ + padding_);
  remaining_ = padding_ = 0;

  PaxRecords pax;
  std::optional<std::string> gnu_name;
  std::optional<std::string> gnu_link;
  std::array<char, kBlock> block{};

  for (;;) {
    std::size_t got = 0;
    while (got < kBlock) {
      std::size_t n = source_.read(block.data() + got, kBlock - got);
      if (n == 0) break;
      got += n;
    }
    offset_ += got;
    if (got == 0) {
      // missing end-of-archive marker; tolerated like GNU tar does
      done_ = true;
      return std::nullopt;
    }
    if (got < kBlock) throw Error(Errc::MalformedArchive, "truncated tar header");
    if (std::all_of(block.begin(), block.end(), [](char c) { return c == '\0'; })) {
      done_ = true;
      return std::nullopt;
    }
    if (!verify_checksum(block.data())) {
      throw Error(Errc::MalformedArchive, "tar header checksum mismatch");
    }

    const char* b = block.data();
    char type = b[156];
    std::uint64_t size = parse_number(b, 124, 12);

    if (type == 'x') {
      parse_pax(read_blob(size), pax);
      continue;
    }
    if (type == 'g') {
      read_blob(size);
      continue;
    }
    if (type == 'L' || type == 'K') {
      std::string value = read_blob(size);
      value = std::string(field(value.data(), 0, value.size()));
      (type == 'L' ? gnu_name : gnu_link) = std::move(value);
      continue;
    }

    Header h;
    h.type = type;
    h.mode = static_cast<std::uint32_t>(parse_number(b, 100, 8) & 07777);
    h.mtime = static_cast<std::int64_t>(parse_number(b, 136, 12));
    h.size = size;
    h.linkname = std::string(field(b, 157, 100));
    std::string name(field(b, 0, 100));
    if (field(b, 257, 5) == "ustar") {
      std::string_view prefix = field(b, 345, 155);
      if (!prefix.empty()) name = std::string(prefix) + "/" + name;
    }
    h.path = std::move(name);

    if (gnu_name) h.path = *gnu_name;
    if (gnu_link) h.linkname = *gnu_link;
    if (pax.path) h.path = *pax.path;
    if (pax.linkpath) h.linkname = *pax.linkpath;
    if (pax.size) h.size = *pax.size;
    if (pax.mtime) h.mtime = *pax.mtime;

    // only these carry payload; links and dirs may declare a size but have none
    bool has_payload = h.is_regular() || (type != kHardlink && type != kSymlink &&
                                          type != kDirectory && type != kCharDevice &&
                                          type != kBlockDevice && type != kFifo);
    if (!has_payload) h.size = 0;
    remaining_ = has_payload ? h.size : 0;
    padding_ = padding_for(remaining_);
    return h;
  }
}

void Reader::read_payload(const std::function<void(std::string_view)>& sink) {
  char buf[1 << 16];
  while (remaining_ > 0) {
    auto chunk = static_cast<std::size_t>(std::min<std::uint64_t>(remaining_, sizeof(buf)));
    read_exact(buf, chunk);
    remaining_ -= chunk;
    sink(std::string_view(buf, chunk));
  }
}

std::string Reader::read_payload() {
  std::string out;
  out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(remaining_, 1ull << 30)));
  read_payload([&out](std::string_view chunk) { out += chunk; });
  return out;
}

void Writer::write_padded(std::string_view data) {
  sink_.write(data);
  static const std::array<char, kBlock> zeros{};
  auto pad = padding_for(data.size());
  if (pad) sink_.write(std::string_view(zeros.data(), static_cast<std::size_t>(pad)));
}

void Writer::write_block_header(const Header& h, std::string_view name, std::string_view linkname,
                                bool size_in_pax, bool mtime_in_pax) {
  std::array<char, kBlock> block{};
  char* b = block.data();
  std::memcpy(b, name.data(), std::min<std::size_t>(name.size(), 100));
  put_octal(b, 100, 8, h.mode & 07777);
  put_octal(b, 108, 8, 0);
  put_octal(b, 116, 8, 0);
  put_octal(b, 124, 12, size_in_pax ? 0 : h.size);
  put_octal(b, 136, 12, mtime_in_pax ? 0 : static_cast<std::uint64_t>(h.mtime));
  b[156] = h.type;
  std::memcpy(b + 157, linkname.data(), std::min<std::size_t>(linkname.size(), 100));
  std::memcpy(b + 257, "ustar", 6);
  std::memcpy(b + 263, "00", 2);
  put_octal(b, 329, 8, 0);
  put_octal(b, 337, 8, 0);
  std::memset(b + 148, ' ', 8);
  std::uint64_t sum = 0;
  for (char c : block) sum += static_cast<unsigned char>(c);
  put_octal(b, 148, 7, sum);
  b[155] = ' ';
  sink_.write(std::string_view(b, kBlock));
}

void Writer::add(const Header& h, std::string_view data) {
  if (h.is_regular() && h.size != data.size()) {
    throw Error(Errc::IoFailure, "tar member size does not match its data: " + h.path);
  }
  std::string pax;
  bool long_name = h.path.size() > 100;
  bool long_link = h.linkname.size() > 100;
  bool big_size = h.size > kMaxOctal11;
  bool odd_mtime = h.mtime < 0 || static_cast<std::uint64_t>(h.mtime) > kMaxOctal11;
  if (long_name) pax += pax_record("path", h.path);
  if (long_link) pax += pax_record("linkpath", h.linkname);
  if (big_size) pax += pax_record("size", std::to_string(h.size));
  if (odd_mtime) pax += pax_record("mtime", std::to_string(h.mtime));

  if (!pax.empty()) {
    Header ext;
    ext.type = 'x';
    ext.mode = 0644;
    ext.size = pax.size();
    std::string ext_name = "PaxHeaders/" + h.path.substr(h.path.rfind('/') + 1);
    if (ext_name.size() > 100) ext_name.resize(100);
    write_block_header(ext, ext_name, {}, false, false);
    write_padded(pax);
  }

  std::string_view name = h.path;
  if (long_name) name = name.substr(0, 100);
  std::string_view link = h.linkname;
  if (long_link) link = link.substr(0, 100);
  write_block_header(h, name, link, big_size, odd_mtime);
  if (h.is_regular()) write_padded(data);
}

void Writer::finish() {
  static const std::array<char, kBlock * 2> zeros{};
  sink_.write(std::string_view(zeros.data(), zeros.size()));
}

}  // namespace udss::tar
