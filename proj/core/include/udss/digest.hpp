#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

namespace udss {

// Content address of the form "<algorithm>:<hex>". Only sha256 is supported.
struct Digest {
  std::string algorithm = "sha256";
  std::string hex;

  // Throws Error(MalformedImage) on anything other than "sha256:<64 hex>".
  static Digest parse(std::string_view text);
  static bool looks_like(std::string_view text) noexcept;

  std::string str() const { return algorithm + ":" + hex; }
  friend bool operator==(const Digest&, const Digest&) = default;
};

// Incremental SHA-256.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::string_view data);
  Digest finish();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

Digest sha256(std::string_view data);
Digest sha256_file(const std::filesystem::path& file);

}  // namespace udss
