#include "stork/errors.hpp"

namespace stork {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::unsupported_key_size: return "unsupported key size";
    case ErrorCode::out_of_range: return "out of range";
    case ErrorCode::decryption_failure: return "decryption failure";
    case ErrorCode::integrity: return "integrity check failed";
    case ErrorCode::malformed: return "malformed document";
    case ErrorCode::unknown_root: return "unknown root element";
    case ErrorCode::missing_element: return "missing element";
    case ErrorCode::invariant: return "invariant violation";
    case ErrorCode::not_authorized: return "not authorized";
    case ErrorCode::window_closed: return "window closed";
    case ErrorCode::conflicting_ticket: return "conflicting ticket";
    case ErrorCode::window_too_short: return "window too short";
    case ErrorCode::insufficient_nodes: return "insufficient nodes";
    case ErrorCode::empty_frame: return "empty delivery frame";
    case ErrorCode::unknown_entry: return "unknown entry";
    case ErrorCode::unknown_survey: return "unknown survey";
    case ErrorCode::policy: return "policy violation";
    case ErrorCode::transport: return "transport failure";
    case ErrorCode::aborted: return "aborted";
  }
  return "unknown";
}

int wire_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_authorized: return 401;
    case ErrorCode::conflicting_ticket: return 409;
    case ErrorCode::window_closed: return 410;
    case ErrorCode::integrity: return 422;
    case ErrorCode::decryption_failure: return 500;
    case ErrorCode::unknown_survey: return 999;
    case ErrorCode::transport: return 502;
    case ErrorCode::policy: return 403;
    default: return 400;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace stork
