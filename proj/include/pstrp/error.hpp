#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pstrp {

enum class ErrorCode {
  kLayoutMismatch,
  kLabelMismatch,
  kParse,
  kConfig,
  kUnknownKey,
  kIndex,
  kValidation,
  kShape,
  kIo,
  kDivergence,
  kUndefined,
};

std::string_view error_code_name(ErrorCode code);

/// Every failure surfaced by the library carries a stable machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace pstrp
