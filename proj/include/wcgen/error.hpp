#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wcgen {

enum class ErrorCode {
  invalid_argument,
  invalid_state,
  precondition,
  not_found,
  degenerate_bearing,
  capability,
  transport,
  malformed_response,
  protocol_violation,
  load_error,
  io_error,
  checksum_mismatch,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::invalid_state: return "invalid_state";
    case ErrorCode::precondition: return "precondition";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::degenerate_bearing: return "degenerate_bearing";
    case ErrorCode::capability: return "capability";
    case ErrorCode::transport: return "transport";
    case ErrorCode::malformed_response: return "malformed_response";
    case ErrorCode::protocol_violation: return "protocol_violation";
    case ErrorCode::load_error: return "load_error";
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::checksum_mismatch: return "checksum_mismatch";
  }
  return "unknown";
}

/// Base exception for every failure raised by the library. The code is the
/// stable, machine-checkable part; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised by remote backends once the retry budget is spent.
class TransportError : public Error {
 public:
  TransportError(const std::string& message, int attempts, int last_status)
      : Error(ErrorCode::transport, message),
        attempts_(attempts),
        last_status_(last_status) {}

  int attempts() const noexcept { return attempts_; }
  /// HTTP status of the final attempt, or 0 if no response was received.
  int last_status() const noexcept { return last_status_; }

 private:
  int attempts_;
  int last_status_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace wcgen
