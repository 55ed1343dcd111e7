#include "pstrp/error.hpp"

namespace pstrp {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kLayoutMismatch:
      return "layout_mismatch";
    case ErrorCode::kLabelMismatch:
      return "label_mismatch";
    case ErrorCode::kParse:
      return "parse_error";
    case ErrorCode::kConfig:
      return "config_error";
    case ErrorCode::kUnknownKey:
      return "unknown_key";
    case ErrorCode::kIndex:
      return "index_error";
    case ErrorCode::kValidation:
      return "validation_error";
    case ErrorCode::kShape:
      return "shape_error";
    case ErrorCode::kIo:
      return "io_error";
    case ErrorCode::kDivergence:
      return "divergence";
    case ErrorCode::kUndefined:
      return "undefined";
  }
  return "unknown";
}

}  // namespace pstrp
