#include "drivesense/error.hpp"

namespace drivesense {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::UnsupportedSentenceType: return "UnsupportedSentenceType";
    case ErrorCode::MalformedField: return "MalformedField";
    case ErrorCode::UnsupportedPid: return "UnsupportedPid";
    case ErrorCode::PayloadLengthMismatch: return "PayloadLengthMismatch";
    case ErrorCode::FieldCount: return "FieldCount";
    case ErrorCode::NonNumeric: return "NonNumeric";
    case ErrorCode::UnknownKind: return "UnknownKind";
    case ErrorCode::CameraKindMismatch: return "CameraKindMismatch";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::InsufficientAnchors: return "InsufficientAnchors";
    case ErrorCode::DegenerateFit: return "DegenerateFit";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::NoQuiescentPeriod: return "NoQuiescentPeriod";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::EmptyStream: return "EmptyStream";
    case ErrorCode::EmptyNetwork: return "EmptyNetwork";
    case ErrorCode::NoCandidates: return "NoCandidates";
    case ErrorCode::Unreachable: return "Unreachable";
    case ErrorCode::DegenerateTrip: return "DegenerateTrip";
    case ErrorCode::ScriptEventOutsideDrive: return "ScriptEventOutsideDrive";
    case ErrorCode::InvalidScript: return "InvalidScript";
    case ErrorCode::IncompleteTrips: return "IncompleteTrips";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::TypeMismatch: return "TypeMismatch";
    case ErrorCode::HashMismatch: return "HashMismatch";
    case ErrorCode::StageOrder: return "StageOrder";
    case ErrorCode::Locked: return "Locked";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace drivesense
