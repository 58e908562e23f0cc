#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace expobench {

enum class ErrorKind {
  // validation: malformed or inconsistent input
  InvalidArgument,
  DimensionMismatch,
  InsufficientExposureSpan,
  NonStaticStack,
  MissingManifest,
  CorruptImage,
  LadderMismatch,
  RangeViolation,
  ParseError,
  NonMonotoneTimestamps,
  BadQuaternion,
  NoOverlap,
  TrajectoryTooShort,
  EmptyInput,
  // runtime
  IoFailure,
  ControllerFault,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InsufficientExposureSpan: return "InsufficientExposureSpan";
    case ErrorKind::NonStaticStack: return "NonStaticStack";
    case ErrorKind::MissingManifest: return "MissingManifest";
    case ErrorKind::CorruptImage: return "CorruptImage";
    case ErrorKind::LadderMismatch: return "LadderMismatch";
    case ErrorKind::RangeViolation: return "RangeViolation";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::NonMonotoneTimestamps: return "NonMonotoneTimestamps";
    case ErrorKind::BadQuaternion: return "BadQuaternion";
    case ErrorKind::NoOverlap: return "NoOverlap";
    case ErrorKind::TrajectoryTooShort: return "TrajectoryTooShort";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::ControllerFault: return "ControllerFault";
  }
  return "Unknown";
}

/// True for errors caused by bad input rather than by the environment.
constexpr bool is_validation_error(ErrorKind kind) noexcept {
  return kind != ErrorKind::IoFailure && kind != ErrorKind::ControllerFault;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace expobench
