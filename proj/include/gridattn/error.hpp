// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace gridattn {

enum class ErrorCode {
  kDimensionMismatch,
  kInvalidConfig,
  kState,
  kNonFinite,
  kIncompleteGrid,
  kDuplicateCell,
  kFormat,
  kDegenerateShift,
  kNoTissue,
  kTooSmall,
  kParse,
  kUndefinedMetric,
  kDegenerateTest,
  kOutOfRange,
  kIo,
};

const char* to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kInvalidConfig: return "invalid config";
    case ErrorCode::kState: return "state error";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kIncompleteGrid: return "incomplete grid";
    case ErrorCode::kDuplicateCell: return "duplicate cell";
    case ErrorCode::kFormat: return "format error";
    case ErrorCode::kDegenerateShift: return "degenerate shift";
    case ErrorCode::kNoTissue: return "no tissue";
    case ErrorCode::kTooSmall: return "image too small";
    case ErrorCode::kParse: return "parse error";
    case ErrorCode::kUndefinedMetric: return "undefined metric";
    case ErrorCode::kDegenerateTest: return "degenerate test";
    case ErrorCode::kOutOfRange: return "out of range";
    case ErrorCode::kIo: return "I/O error";
  }
  return "error";
}

}  // namespace gridattn
