#include "posekit/error.hpp"

namespace posekit {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidInput: return "invalid input";
    case ErrorCode::kInvalidDepth: return "invalid depth";
    case ErrorCode::kEmptyForeground: return "empty foreground";
    case ErrorCode::kInsufficientPoints: return "insufficient points";
    case ErrorCode::kDegenerateConfiguration: return "degenerate configuration";
    case ErrorCode::kNoConsensus: return "no consensus";
    case ErrorCode::kRegistrationFailed: return "registration failed";
    case ErrorCode::kNoOverlap: return "no overlap";
    case ErrorCode::kParse: return "parse error";
    case ErrorCode::kVertexCount: return "vertex count";
    case ErrorCode::kOutOfBounds: return "out of canonical bounds";
    case ErrorCode::kFormat: return "format error";
    case ErrorCode::kContiguity: return "contiguity error";
    case ErrorCode::kSpec: return "scene spec error";
    case ErrorCode::kIo: return "io error";
  }
  return "unknown error";
}

bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidInput:
    case ErrorCode::kInvalidDepth:
    case ErrorCode::kParse:
    case ErrorCode::kVertexCount:
    case ErrorCode::kOutOfBounds:
    case ErrorCode::kFormat:
    case ErrorCode::kContiguity:
    case ErrorCode::kSpec:
      return true;
    default:
      return false;
  }
}

}  // namespace posekit
