#pragma once

#include <stdexcept>
#include <string>

namespace posekit {

enum class ErrorCode {
  kInvalidInput,
  kInvalidDepth,
  kEmptyForeground,
  kInsufficientPoints,
  kDegenerateConfiguration,
  kNoConsensus,
  kRegistrationFailed,
  kNoOverlap,
  kParse,
  kVertexCount,
  kOutOfBounds,
  kFormat,
  kContiguity,
  kSpec,
  kIo,
};

const char* to_string(ErrorCode code);

// Validation errors are caller mistakes (bad files, bad arguments); the CLI
// maps them to exit code 2 and everything else to 1.
bool is_validation_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace posekit
