#pragma once

#include <sys/types.h>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace udss {

enum class EnvPolicy { inherit_host, image_config, merged };

std::string_view to_string(EnvPolicy policy) noexcept;
// Accepts "inherit-host", "image-config", "merged". Throws InvalidConfig.
EnvPolicy parse_env_policy(std::string_view text);

struct BindMount {
  std::filesystem::path host_path;
  std::filesystem::path container_path;

  friend bool operator==(const BindMount&, const BindMount&) = default;
};

// "SRC" or "SRC:DST"; DST defaults to SRC. Throws InvalidConfig.
BindMount parse_bind(std::string_view text);

struct ContainerSpec {
  std::filesystem::path rootfs;
  std::vector<BindMount> binds;
  EnvPolicy env_policy = EnvPolicy::inherit_host;
  // Unset: the image's recorded working directory, else "/".
  std::optional<std::filesystem::path> workdir;
  bool writable = false;
  std::vector<std::string> command;

  // Host resources bound at the same path: /dev, /proc, /sys, $HOME and
  // these site directories. Skipped individually when the image has no
  // mount point for them and is read-only.
  bool default_binds = true;
  std::vector<std::filesystem::path> site_bind_dirs;
};

// The only mapping the runtime ever installs: each id maps to itself.
struct IdentityMap {
  uid_t host_uid;
  gid_t host_gid;
  uid_t container_uid;
  gid_t container_gid;

  static IdentityMap current() noexcept;
  std::string uid_map() const;  // contents for /proc/self/uid_map
  std::string gid_map() const;
};

struct StdioRedirect {
  int in = -1;
  int out = -1;
  int err = -1;
};

// Checks the launch preconditions without touching namespaces.
// Throws RootfsMissing, BindSourceMissing or RuntimeSetupFailed (empty command).
void validate(const ContainerSpec& spec);

// The binds enter() will attempt, in mount order, flagged default or not.
struct PlannedBind {
  BindMount mount;
  bool required;  // user binds are required; default binds are best-effort
};
std::vector<PlannedBind> planned_binds(const ContainerSpec& spec);

// Environment the contained process receives under spec.env_policy.
// `image_env` holds the KEY=VALUE lines recorded in the image.
std::vector<std::string> container_environment(EnvPolicy policy,
                                               const std::vector<std::string>& host_env,
                                               const std::vector<std::string>& image_env);

// Moves the calling process into the container: new user + mount namespace
// with identity mapping, binds, optional read-only root, pivot_root,
// no_new_privs, working directory and environment. The caller must be
// single-threaded. Throws NoUserNamespaces, RootfsMissing,
// BindSourceMissing, BindTargetMissing or RuntimeSetupFailed.
void enter(const ContainerSpec& spec);

// enter() followed by execvp() of spec.command; only returns by throwing
// (ExecNotFound when the command is absent from the image).
[[noreturn]] void exec(const ContainerSpec& spec);

// Forks a child that exec()s the spec; returns once the contained command is
// running. Setup failures in the child are rethrown here.
pid_t spawn(const ContainerSpec& spec, const StdioRedirect& io = {});

// Waits for `pid` and returns its exit code, or 128+signal.
int wait_exit(pid_t pid);

// spawn + wait_exit.
int run(const ContainerSpec& spec, const StdioRedirect& io = {});

// ---------------------------------------------------------------- probing

struct CapabilityReport {
  bool user_namespaces = false;
  std::string detail;
  std::optional<std::string> blocking_sysctl;  // e.g. "kernel.unprivileged_userns_clone"
  std::optional<long> max_user_namespaces;
  int max_uid_map_lines = 0;
  bool overlay = false;
  bool nested = false;
  int nesting_depth = 0;  // lower bound; 0 means the initial namespace
  std::string kernel_release;
};

struct ProbeOptions {
  std::filesystem::path proc_root = "/proc";
  // Actually try unshare(CLONE_NEWUSER) in a throwaway child.
  bool live_check = true;
};

CapabilityReport probe_support(const ProbeOptions& options = {});
std::string format_report(const CapabilityReport& report);

}  // namespace udss
