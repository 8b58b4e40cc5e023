#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace doppler_odom {

enum class ErrorCode {
  ZeroRange,
  EmptyScan,
  InsufficientPoints,
  DegenerateGeometry,
  NoConsensus,
  SingularGeometry,
  NonMonotonicTimestamp,
  InsufficientMotion,
  AmbiguousDirection,
  InsufficientExcitation,
  NoReference,
  DegenerateManeuver,
  ParseError,
  ValidationError,
  IoError,
  NoOverlap,
  EmptyTrajectory,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroRange: return "ZeroRange";
    case ErrorCode::EmptyScan: return "EmptyScan";
    case ErrorCode::InsufficientPoints: return "InsufficientPoints";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::NoConsensus: return "NoConsensus";
    case ErrorCode::SingularGeometry: return "SingularGeometry";
    case ErrorCode::NonMonotonicTimestamp: return "NonMonotonicTimestamp";
    case ErrorCode::InsufficientMotion: return "InsufficientMotion";
    case ErrorCode::AmbiguousDirection: return "AmbiguousDirection";
    case ErrorCode::InsufficientExcitation: return "InsufficientExcitation";
    case ErrorCode::NoReference: return "NoReference";
    case ErrorCode::DegenerateManeuver: return "DegenerateManeuver";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::EmptyTrajectory: return "EmptyTrajectory";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so that
/// callers (notably the CLI) can map it onto a stable exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace doppler_odom
