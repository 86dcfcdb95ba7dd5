#include "udss/cli/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <sstream>

#include "udss/error.hpp"
#include "udss/stream.hpp"

namespace udss::cli {

namespace {

std::string trim(std::string_view s) {
  auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::filesystem::path> parse_dir_list(const std::string& text) {
  std::vector<std::filesystem::path> dirs;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(':', start);
    if (end == std::string::npos) end = text.size();
    std::string item = trim(std::string_view(text).substr(start, end - start));
    if (!item.empty()) {
      std::filesystem::path p(item);
      if (!p.is_absolute()) throw Error(Errc::InvalidConfig, "site bind dir must be absolute: " + item);
      dirs.push_back(p.lexically_normal());
    }
    start = end + 1;
  }
  return dirs;
}

template <class T>
const std::optional<T>& pick(const std::optional<T>& flag, const std::optional<T>& env,
                             const std::optional<T>& file) {
  if (flag) return flag;
  if (env) return env;
  return file;
}

}  // namespace

std::string env_name(std::string_view key) {
  std::string name(kEnvPrefix);
  for (char c : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return name;
}

Getenv process_getenv() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
  };
}

ConfigLayer layer_from_env(const Getenv& getenv) {
  ConfigLayer layer;
  layer.site_bind_dirs = getenv(env_name(kKeySiteBindDirs));
  layer.default_env_policy = getenv(env_name(kKeyDefaultEnvPolicy));
  layer.verbosity = getenv(env_name(kKeyVerbosity));
  return layer;
}

ConfigLayer parse_config_file(std::string_view text) {
  ConfigLayer layer;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::InvalidConfig, "config line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(std::string_view(t).substr(0, eq));
    std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key == kKeySiteBindDirs) {
      layer.site_bind_dirs = value;
    } else if (key == kKeyDefaultEnvPolicy) {
      layer.default_env_policy = value;
    } else if (key == kKeyVerbosity) {
      layer.verbosity = value;
    } else {
      throw Error(Errc::InvalidConfig, "config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  return layer;
}

LogLevel parse_verbosity(std::string_view text) {
  std::string t = trim(text);
  if (t == "error" || t == "0") return LogLevel::error;
  if (t == "warn" || t == "1") return LogLevel::warn;
  if (t == "info" || t == "2") return LogLevel::info;
  if (t == "debug" || t == "3") return LogLevel::debug;
  throw Error(Errc::InvalidConfig, "verbosity must be error, warn, info or debug: '" + t + "'");
}

GlobalConfig resolve_config(const ConfigLayer& flags, const ConfigLayer& env, const ConfigLayer& file) {
  GlobalConfig cfg;
  if (auto& v = pick(flags.site_bind_dirs, env.site_bind_dirs, file.site_bind_dirs)) {
    cfg.site_bind_dirs = parse_dir_list(*v);
  }
  if (auto& v = pick(flags.default_env_policy, env.default_env_policy, file.default_env_policy)) {
    cfg.default_env_policy = parse_env_policy(trim(*v));
  }
  if (auto& v = pick(flags.verbosity, env.verbosity, file.verbosity)) {
    cfg.verbosity = parse_verbosity(*v);
  }
  return cfg;
}

GlobalConfig load_config(const ConfigLayer& flags, const std::optional<std::filesystem::path>& flag_path,
                         const Getenv& getenv) {
  std::optional<std::filesystem::path> path = flag_path;
  if (!path) {
    if (auto v = getenv(env_name(kKeyConfig)); v && !v->empty()) path = *v;
  }
  ConfigLayer file;
  if (path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(*path, ec)) {
      throw Error(Errc::InvalidConfig, "config file not found: " + path->string());
    }
    file = parse_config_file(read_file(*path));
  }
  GlobalConfig cfg = resolve_config(flags, layer_from_env(getenv), file);
  cfg.config_file_path = path;
  return cfg;
}

}  // namespace udss::cli
