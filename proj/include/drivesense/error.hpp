#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace drivesense {

enum class ErrorCode {
  // sensor ingest
  ChecksumMismatch,
  UnsupportedSentenceType,
  MalformedField,
  UnsupportedPid,
  PayloadLengthMismatch,
  FieldCount,
  NonNumeric,
  UnknownKind,
  CameraKindMismatch,
  InvariantViolation,
  // time sync
  InsufficientAnchors,
  DegenerateFit,
  TooFewSamples,
  // motion / vision
  NoQuiescentPeriod,
  NoOverlap,
  EmptyStream,
  // map matching
  EmptyNetwork,
  NoCandidates,
  Unreachable,
  DegenerateTrip,
  // simulation
  ScriptEventOutsideDrive,
  InvalidScript,
  // storage / config
  IncompleteTrips,
  UnknownKey,
  TypeMismatch,
  HashMismatch,
  StageOrder,
  Locked,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Single exception type carrying a machine-checkable code; the message names
/// the offending field, file or stage.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace drivesense
