#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "udss/log.hpp"
#include "udss/runtime.hpp"

namespace udss::cli {

struct GlobalConfig {
  std::vector<std::filesystem::path> site_bind_dirs;  // absolute
  EnvPolicy default_env_policy = EnvPolicy::inherit_host;
  LogLevel verbosity = LogLevel::warn;
  std::optional<std::filesystem::path> config_file_path;

  friend bool operator==(const GlobalConfig&, const GlobalConfig&) = default;
};

// Unparsed values for one configuration source; unset means "not given here".
struct ConfigLayer {
  std::optional<std::string> site_bind_dirs;  // ':'-separated
  std::optional<std::string> default_env_policy;
  std::optional<std::string> verbosity;  // error|warn|info|debug or 0-3
};

inline constexpr std::string_view kEnvPrefix = "UDSS_";

// Config keys as they appear in files; the environment name is
// kEnvPrefix + upper-cased key.
inline constexpr std::string_view kKeySiteBindDirs = "site_bind_dirs";
inline constexpr std::string_view kKeyDefaultEnvPolicy = "default_env_policy";
inline constexpr std::string_view kKeyVerbosity = "verbosity";
inline constexpr std::string_view kKeyConfig = "config";

std::string env_name(std::string_view key);

using Getenv = std::function<std::optional<std::string>(const std::string&)>;
Getenv process_getenv();

ConfigLayer layer_from_env(const Getenv& getenv);

// "key = value" lines; '#' starts a comment line. Throws InvalidConfig on
// unknown keys or lines without '='.
ConfigLayer parse_config_file(std::string_view text);

LogLevel parse_verbosity(std::string_view text);

// Per key: flag, then environment, then file, then built-in default.
// Throws InvalidConfig for bad values or relative site bind dirs.
GlobalConfig resolve_config(const ConfigLayer& flags, const ConfigLayer& env, const ConfigLayer& file);

// Reads the file named by `flag_path`, else by UDSS_CONFIG, and resolves.
GlobalConfig load_config(const ConfigLayer& flags, const std::optional<std::filesystem::path>& flag_path,
                         const Getenv& getenv);

}  // namespace udss::cli
