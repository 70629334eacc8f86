#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace labtwin {

enum class ErrorCode {
  DuplicateId,
  RegistrationAfterStart,
  UnknownEntity,
  UnknownSlot,
  UnknownNode,
  UnknownChannel,
  ZeroCount,
  LengthMismatch,
  NonFiniteState,
  NonPositiveParameter,
  NonPositiveSolvent,
  NegativeMoles,
  NegativeMass,
  NonPositiveA,
  Overdraw,
  CapacityExceeded,
  PreconditionFailed,
  CycleDetected,
  LeafWithChildren,
  ActionFailed,
  WorkflowStillRunning,
  ParseError,
  ValidationError,
  UnitError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (tests, the CLI, the workflow driver) can branch on the kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, detail);
}

}  // namespace labtwin
