#include "udss/path.hpp"

#include <vector>

#include "udss/error.hpp"

namespace udss {

std::string normalize_relative(std::string_view raw) {
  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    std::size_t next = raw.find('/', pos);
    if (next == std::string_view::npos) next = raw.size();
    std::string_view part = raw.substr(pos, next - pos);
    if (part == "..") {
      if (parts.empty()) {
        throw Error(Errc::PathEscape, "path leaves the root: '" + std::string(raw) + "'");
      }
      parts.pop_back();
    } else if (!part.empty() && part != ".") {
      parts.push_back(part);
    }
    pos = next + 1;
  }
  std::string out;
  for (auto part : parts) {
    if (!out.empty()) out += '/';
    out += part;
  }
  return out;
}

std::string_view parent_path(std::string_view path) noexcept {
  auto slash = path.rfind('/');
  return slash == std::string_view::npos ? std::string_view{} : path.substr(0, slash);
}

std::string_view base_name(std::string_view path) noexcept {
  auto slash = path.rfind('/');
  return slash == std::string_view::npos ? path : path.substr(slash + 1);
}

std::string join_path(std::string_view parent, std::string_view child) {
  if (parent.empty()) return std::string(child);
  if (child.empty()) return std::string(parent);
  std::string out(parent);
  out += '/';
  out += child;
  return out;
}

bool is_within(std::string_view path, std::string_view ancestor) noexcept {
  if (ancestor.empty()) return true;
  if (!path.starts_with(ancestor)) return false;
  return path.size() == ancestor.size() || path[ancestor.size()] == '/';
}

}  // namespace udss
