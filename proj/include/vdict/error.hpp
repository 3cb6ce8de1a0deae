#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vdict {

enum class ErrorCode {
  kInvalidCharacter = 1,
  kEmptyWord,
  kTooLong,
  kEmptyLexicon,
  kInfeasibleCount,
  kNonFiniteParams,
  kDegenerateEmbedding,
  kNonFiniteLoss,
  kVersionMismatch,
  kCorruptFile,
  kIoError,
  kInvalidArgument,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidCharacter: return "InvalidCharacter";
    case ErrorCode::kEmptyWord: return "EmptyWord";
    case ErrorCode::kTooLong: return "TooLong";
    case ErrorCode::kEmptyLexicon: return "EmptyLexicon";
    case ErrorCode::kInfeasibleCount: return "InfeasibleCount";
    case ErrorCode::kNonFiniteParams: return "NonFiniteParams";
    case ErrorCode::kDegenerateEmbedding: return "DegenerateEmbedding";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kCorruptFile: return "CorruptFile";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error carrying a category.
/// The CLI maps the category onto its process exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline int exit_code(ErrorCode code) { return 10 + static_cast<int>(code); }

}  // namespace vdict
