#pragma once

#include <stdexcept>
#include <string>

namespace csgd {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  NumericOverflow,
  NonConvergence,
  Config,
  Io,
  Diverged,
  DegenerateDiagnostic,
  DegenerateDirection,
};

const char* to_string(ErrorCode code);

// Every failure raised inside the library carries a code so the C boundary can
// map it onto a stable status value.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace csgd
