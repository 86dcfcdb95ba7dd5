#pragma once

#include <string>
#include <string_view>

namespace udss {

// Lexically normalizes an archive member path into a root-relative form:
// leading '/' and "./" are dropped, "." and empty components collapse, and
// ".." pops a component. Throws Error(PathEscape) if ".." would climb above
// the root. The root itself normalizes to "".
std::string normalize_relative(std::string_view raw);

// "a/b/c" -> "a/b"; "a" -> "".
std::string_view parent_path(std::string_view path) noexcept;

// "a/b/c" -> "c".
std::string_view base_name(std::string_view path) noexcept;

// Joins two relative paths; either side may be empty.
std::string join_path(std::string_view parent, std::string_view child);

// True when `path` is `ancestor` or lies beneath it ("" is everyone's ancestor).
bool is_within(std::string_view path, std::string_view ancestor) noexcept;

}  // namespace udss
