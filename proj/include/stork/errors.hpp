#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stork {

enum class ErrorCode {
  invalid_argument,
  unsupported_key_size,
  out_of_range,
  decryption_failure,
  integrity,
  malformed,
  unknown_root,
  missing_element,
  invariant,
  not_authorized,
  window_closed,
  conflicting_ticket,
  window_too_short,
  insufficient_nodes,
  empty_frame,
  unknown_entry,
  unknown_survey,
  policy,
  transport,
  aborted,
};

std::string_view to_string(ErrorCode code);

/// Numeric code used in `<error code="...">` response documents.
int wire_code(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace stork
