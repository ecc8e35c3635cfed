#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace moralbench {

enum class ErrorCode {
  kMissingField,
  kPlaceholderMismatch,
  kInvalidLabel,
  kWrongStrategyKind,
  kUnknownStrategy,
  kCountMismatch,
  kSchemaError,
  kLabelError,
  kExhausted,
  kAuthError,
  kRequestRejected,
  kMalformedResponse,
  kEmptyInput,
  kMixedVocabulary,
  kRankDeficient,
  kDimensionMismatch,
  kMissingReference,
  kPreconditionViolation,
  kIOError,
  kConfigError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingField: return "MissingField";
    case ErrorCode::kPlaceholderMismatch: return "PlaceholderMismatch";
    case ErrorCode::kInvalidLabel: return "InvalidLabel";
    case ErrorCode::kWrongStrategyKind: return "WrongStrategyKind";
    case ErrorCode::kUnknownStrategy: return "UnknownStrategy";
    case ErrorCode::kCountMismatch: return "CountMismatch";
    case ErrorCode::kSchemaError: return "SchemaError";
    case ErrorCode::kLabelError: return "LabelError";
    case ErrorCode::kExhausted: return "Exhausted";
    case ErrorCode::kAuthError: return "AuthError";
    case ErrorCode::kRequestRejected: return "RequestRejected";
    case ErrorCode::kMalformedResponse: return "MalformedResponse";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kMixedVocabulary: return "MixedVocabulary";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kMissingReference: return "MissingReference";
    case ErrorCode::kPreconditionViolation: return "PreconditionViolation";
    case ErrorCode::kIOError: return "IOError";
    case ErrorCode::kConfigError: return "ConfigError";
  }
  return "Unknown";
}

// Every failure raised by the library carries a code so callers (and the CLI)
// can branch on the error class without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace moralbench
