#include "pda/error.hpp"

namespace pda {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::out_of_bounds: return "out_of_bounds";
    case ErrorCode::malformed_header: return "malformed_header";
    case ErrorCode::truncated_payload: return "truncated_payload";
    case ErrorCode::unsupported_format: return "unsupported_format";
    case ErrorCode::io: return "io";
    case ErrorCode::unknown_label: return "unknown_label";
    case ErrorCode::duplicate_id: return "duplicate_id";
    case ErrorCode::missing_file: return "missing_file";
    case ErrorCode::empty_class: return "empty_class";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::invalid_distribution: return "invalid_distribution";
    case ErrorCode::non_finite_loss: return "non_finite_loss";
    case ErrorCode::singular_covariance: return "singular_covariance";
    case ErrorCode::handshake_mismatch: return "handshake_mismatch";
    case ErrorCode::protocol_timeout: return "protocol_timeout";
    case ErrorCode::malformed_response: return "malformed_response";
    case ErrorCode::external_failure: return "external_failure";
    case ErrorCode::parse_error: return "parse_error";
  }
  return "unknown";
}

}  // namespace pda
