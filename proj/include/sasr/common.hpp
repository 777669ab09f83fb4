#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sasr {

enum class ErrorCode {
  empty_session,
  range_error,
  degenerate_buffer,
  no_history,
  unparseable_turn,
  protocol_violation,
  oracle_range,
  config_error,
  file_missing,
  unsupported_encoding,
  truncated_file,
  format_error,
  no_reference,
  backend_error,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::empty_session: return "empty_session";
    case ErrorCode::range_error: return "range_error";
    case ErrorCode::degenerate_buffer: return "degenerate_buffer";
    case ErrorCode::no_history: return "no_history";
    case ErrorCode::unparseable_turn: return "unparseable_turn";
    case ErrorCode::protocol_violation: return "protocol_violation";
    case ErrorCode::oracle_range: return "oracle_range";
    case ErrorCode::config_error: return "config_error";
    case ErrorCode::file_missing: return "file_missing";
    case ErrorCode::unsupported_encoding: return "unsupported_encoding";
    case ErrorCode::truncated_file: return "truncated_file";
    case ErrorCode::format_error: return "format_error";
    case ErrorCode::no_reference: return "no_reference";
    case ErrorCode::backend_error: return "backend_error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// Timestamps are quantized to 10 ms on ingest, round half up.
inline double quantize_time(double seconds) {
  return std::floor(seconds * 100.0 + 0.5) / 100.0;
}

/// Fixed two-decimal rendering used by every text surface that carries times.
inline std::string format_time(double seconds) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", seconds);
  return buf;
}

// splitmix64; used to derive independent per-session seeds from a root seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace sasr
