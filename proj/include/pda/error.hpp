#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pda {

/// Failure categories. Each maps to a stable token printed by the CLI so
/// callers can branch on the first word of an error line.
enum class ErrorCode {
  invalid_argument,
  out_of_bounds,
  malformed_header,
  truncated_payload,
  unsupported_format,
  io,
  unknown_label,
  duplicate_id,
  missing_file,
  empty_class,
  dimension_mismatch,
  invalid_distribution,
  non_finite_loss,
  singular_covariance,
  handshake_mismatch,
  protocol_timeout,
  malformed_response,
  external_failure,
  parse_error,
};

std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace pda
