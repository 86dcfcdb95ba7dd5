#include "cases.hpp"

#include "fixtures.hpp"
#include "udss/digest.hpp"
#include "udss/gzip.hpp"
#include "udss/stream.hpp"

namespace udss::testing {

namespace {

class VectorStore : public BlobStore {
 public:
  explicit VectorStore(std::vector<std::string> blobs) : blobs_(std::move(blobs)) {}
  std::string read(const LayerRef& layer) const override { return blobs_.at(std::stoul(layer.location)); }

 private:
  std::vector<std::string> blobs_;
};

}  // namespace

Flattened flatten_stack(const std::vector<std::vector<LayerEntry>>& layers) {
  std::vector<std::string> blobs;
  ImageManifest m;
  for (const auto& l : layers) {
    blobs.push_back(layer_tar(l));
    LayerRef r;
    r.digest = sha256(blobs.back());
    r.location = std::to_string(blobs.size() - 1);
    m.layers.push_back(r);
  }
  VectorStore store(blobs);
  try {
    return {flatten(m, store), std::nullopt};
  } catch (const Error& e) {
    return {std::nullopt, e.code()};
  }
}

std::filesystem::path raw_archive(const std::filesystem::path& out, const std::vector<tar::Header>& members) {
  StringSink sink;
  tar::Writer w(sink);
  for (auto h : members) {
    std::string data;
    if (h.is_regular()) {
      data = "payload:" + h.path;
      h.size = data.size();
    }
    w.add(h, data);
  }
  w.finish();
  write_file(out, gzip_compress(sink.str()));
  return out;
}

tar::Header tar_dir(std::string path) {
  tar::Header h;
  h.path = std::move(path);
  h.type = tar::kDirectory;
  h.mode = 0755;
  return h;
}

tar::Header tar_file(std::string path) {
  tar::Header h;
  h.path = std::move(path);
  return h;
}

tar::Header tar_link(std::string path, char type, std::string target) {
  tar::Header h;
  h.path = std::move(path);
  h.type = type;
  h.linkname = std::move(target);
  return h;
}

std::vector<AdversarialArchive> named_adversarial_archives() {
  return {
      {"dotdot", {tar_dir("x/"), tar_file("x/../../evil")}, Errc::PathEscape},
      {"dotdot-top", {tar_file("../evil")}, Errc::PathEscape},
      {"absolute-first", {tar_file("/evil")}, Errc::PathEscape},
      {"absolute-later", {tar_dir("x/"), tar_file("x/ok"), tar_file("/tmp/evil")}, Errc::PathEscape},
      {"second-top-level", {tar_dir("x/"), tar_file("x/ok"), tar_file("y/evil")}, Errc::MalformedArchive},
      {"symlink-dir-escape",
       {tar_dir("x/"), tar_link("x/up", tar::kSymlink, "../../outside"), tar_file("x/up/evil")},
       Errc::PathEscape},
      {"symlink-abs-escape",
       {tar_dir("x/"), tar_link("x/abs", tar::kSymlink, "/"), tar_file("x/abs/evil")},
       Errc::PathEscape},
      {"hardlink-out", {tar_dir("x/"), tar_link("x/h", tar::kHardlink, "../outside/secret")}, Errc::PathEscape},
      {"hardlink-via-symlink",
       {tar_dir("x/"), tar_link("x/up", tar::kSymlink, "../outside"), tar_link("x/h", tar::kHardlink, "x/up/secret")},
       Errc::PathEscape},
  };
}

}  // namespace udss::testing
