#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ndt {

// Stable error codes surfaced by the CLI and the twin server.
enum class ErrorCode {
  malformed_header,
  unsupported_datatype,
  truncated_payload,
  invariant_violation,
  spec_mismatch,
  non_positive_distance,
  degenerate_scene,
  empty_path_list,
  out_of_bounds,
  unsupported_numerology,
  out_of_range,
  insufficient_observations,
  degenerate_geometry,
  unreachable,
  blocked_endpoint,
  rebuild_in_progress,
  io_error,
  bad_config,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::malformed_header: return "malformed_header";
    case ErrorCode::unsupported_datatype: return "unsupported_datatype";
    case ErrorCode::truncated_payload: return "truncated_payload";
    case ErrorCode::invariant_violation: return "invariant_violation";
    case ErrorCode::spec_mismatch: return "spec_mismatch";
    case ErrorCode::non_positive_distance: return "non_positive_distance";
    case ErrorCode::degenerate_scene: return "degenerate_scene";
    case ErrorCode::empty_path_list: return "empty_path_list";
    case ErrorCode::out_of_bounds: return "out_of_bounds";
    case ErrorCode::unsupported_numerology: return "unsupported_numerology";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::insufficient_observations: return "insufficient_observations";
    case ErrorCode::degenerate_geometry: return "degenerate_geometry";
    case ErrorCode::unreachable: return "unreachable";
    case ErrorCode::blocked_endpoint: return "blocked_endpoint";
    case ErrorCode::rebuild_in_progress: return "rebuild_in_progress";
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::bad_config: return "bad_config";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ndt
