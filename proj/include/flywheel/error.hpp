#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flywheel {

enum class ErrorCode {
  kNoFeasiblePath,
  kUnboundSlot,
  kUnknownEnvironment,
  kIllegalAction,
  kUndecomposableInstruction,
  kMissingPredicate,
  kIoFailure,
  kCollapsedGroup,
  kUnknownToken,
  kUnencodableText,
  kEmptyBatch,
  kDimensionMismatch,
  kWeightSumInvalid,
  kUnplannableInstruction,
  kConfigError,
  kParseError,
  kInvalidArgument,
};

std::string_view to_string(ErrorCode code);

// Domain error. The CLI maps every Error to exit code 1.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace flywheel
