#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sacloc {

enum class ErrorCode {
  kMissingColumn,
  kMalformedRow,
  kEmptyFile,
  kEmptyInput,
  kInvalidArgument,
  kShapeMismatch,
  kNonScalarLoss,
  kStepOutOfRange,
  kEmptyNeighborhood,
  kDimensionMismatch,
  kEmptyBatch,
  kTrainingDiverged,
  kTooFewPoints,
  kEmptyCalibration,
  kIoError,
  kBadCheckpoint,
  kConfigError,
  kMissingArtifact,
};

std::string_view error_code_name(ErrorCode code);

// Every failure raised by the library. what() is a one-line diagnostic
// prefixed with the code name, e.g. "MissingColumn: no column 'x'".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sacloc
