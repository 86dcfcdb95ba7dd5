#include "udss/error.hpp"

#include <cerrno>
#include <cstring>

namespace udss {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::UnknownFormat: return "UnknownFormat";
    case Errc::MalformedImage: return "MalformedImage";
    case Errc::DigestMismatch: return "DigestMismatch";
    case Errc::MissingBlob: return "MissingBlob";
    case Errc::UnsupportedMediaType: return "UnsupportedMediaType";
    case Errc::EmptyImage: return "EmptyImage";
    case Errc::PathEscape: return "PathEscape";
    case Errc::ConflictingKind: return "ConflictingKind";
    case Errc::HardlinkTargetMissing: return "HardlinkTargetMissing";
    case Errc::EmptyRootfs: return "EmptyRootfs";
    case Errc::MalformedArchive: return "MalformedArchive";
    case Errc::DestCollision: return "DestCollision";
    case Errc::IoFailure: return "IoFailure";
    case Errc::NoUserNamespaces: return "NoUserNamespaces";
    case Errc::RootfsMissing: return "RootfsMissing";
    case Errc::BindSourceMissing: return "BindSourceMissing";
    case Errc::BindTargetMissing: return "BindTargetMissing";
    case Errc::ExecNotFound: return "ExecNotFound";
    case Errc::RuntimeSetupFailed: return "RuntimeSetupFailed";
    case Errc::PlanMismatch: return "PlanMismatch";
    case Errc::InvalidPlan: return "InvalidPlan";
    case Errc::MissingBaseline: return "MissingBaseline";
    case Errc::DuplicateNodeCount: return "DuplicateNodeCount";
    case Errc::InvalidRecord: return "InvalidRecord";
    case Errc::NoMeasurements: return "NoMeasurements";
    case Errc::WorkloadFailed: return "WorkloadFailed";
    case Errc::PatternNotFound: return "PatternNotFound";
    case Errc::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      message_(message) {}

WorkloadError::WorkloadError(const std::string& message, int exit_status,
                             bool containerized)
    : Error(Errc::WorkloadFailed, message),
      exit_status_(exit_status),
      containerized_(containerized) {}

void throw_errno(Errc code, const std::string& what, int err) {
  throw Error(code, what + ": " + std::strerror(err));
}

void throw_errno(Errc code, const std::string& what) { throw_errno(code, what, errno); }

}  // namespace udss
