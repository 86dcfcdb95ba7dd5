#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace udss {

enum class Errc {
  // image input
  UnknownFormat,
  MalformedImage,
  DigestMismatch,
  MissingBlob,
  UnsupportedMediaType,
  EmptyImage,
  // tree / archive paths
  PathEscape,
  ConflictingKind,
  HardlinkTargetMissing,
  EmptyRootfs,
  MalformedArchive,
  DestCollision,
  IoFailure,
  // runtime
  NoUserNamespaces,
  RootfsMissing,
  BindSourceMissing,
  BindTargetMissing,
  ExecNotFound,
  RuntimeSetupFailed,
  // launcher
  PlanMismatch,
  InvalidPlan,
  // bench
  MissingBaseline,
  DuplicateNodeCount,
  InvalidRecord,
  NoMeasurements,
  WorkloadFailed,
  PatternNotFound,
  // cli
  InvalidConfig,
};

std::string_view to_string(Errc code) noexcept;

// All failures surfaced by the core library are thrown as Error. what()
// carries "<Code>: <message>"; message() carries the bare message.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }

 private:
  Errc code_;
  std::string message_;
};

// Raised by measure_pair when a workload run exits unsuccessfully.
class WorkloadError : public Error {
 public:
  WorkloadError(const std::string& message, int exit_status, bool containerized);

  int exit_status() const noexcept { return exit_status_; }
  bool containerized() const noexcept { return containerized_; }

 private:
  int exit_status_;
  bool containerized_;
};

// Error from a failed libc call: appends strerror(errno) to `what`.
[[noreturn]] void throw_errno(Errc code, const std::string& what, int err);
[[noreturn]] void throw_errno(Errc code, const std::string& what);

}  // namespace udss
