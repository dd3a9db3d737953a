#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sugvoxel {

enum class ErrorCode {
  invalid_argument,
  out_of_grid,
  duplicate_coord,
  channel_mismatch,
  stride_mismatch,
  dim_mismatch,
  magic_mismatch,
  dimension_overflow,
  truncated_payload,
  io_failure,
  unsupported_kernel_size,
  occ_domain_mismatch,
  empty_active_set,
  degenerate_camera,
  primitive_out_of_grid,
  config_error,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::out_of_grid: return "out-of-grid";
    case ErrorCode::duplicate_coord: return "duplicate-coord";
    case ErrorCode::channel_mismatch: return "channel-mismatch";
    case ErrorCode::stride_mismatch: return "stride-mismatch";
    case ErrorCode::dim_mismatch: return "dim-mismatch";
    case ErrorCode::magic_mismatch: return "magic-mismatch";
    case ErrorCode::dimension_overflow: return "dimension-overflow";
    case ErrorCode::truncated_payload: return "truncated-payload";
    case ErrorCode::io_failure: return "io-failure";
    case ErrorCode::unsupported_kernel_size: return "unsupported-size";
    case ErrorCode::occ_domain_mismatch: return "occ-domain-mismatch";
    case ErrorCode::empty_active_set: return "empty-active-set";
    case ErrorCode::degenerate_camera: return "degenerate-camera";
    case ErrorCode::primitive_out_of_grid: return "primitive-out-of-grid";
    case ErrorCode::config_error: return "config-error";
  }
  return "unknown";
}

// Every failure surfaced by the library carries one of the codes above so
// callers (and the CLI) can report them distinctly.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), message_(what) {}

  ErrorCode code() const noexcept { return code_; }
  // what() without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace sugvoxel
