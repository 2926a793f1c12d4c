// Copyright 2026 The codefend Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace codefend {

enum class ErrorCode {
  kInvalidArgument,
  kMissingFile,
  kSchemaError,
  kDanglingRef,
  kDegenerateSplit,
  kIoError,
  kOracleFailure,
  kShapeMismatch,
  kStepOutOfRange,
  kEmptySplit,
  kNonFiniteLoss,
  kCheckpointCorrupt,
  kSamplerDiverged,
  kPositionNotMutable,
  kAlignmentError,
  kEmptyPrefix,
  kRankTooLarge,
  kEmptyDataset,
  kBaseMismatch,
  kStageFailure,
  kUnresolvedRole,
  kUnknownProvider,
  kUntargetedItem,
  kLengthMismatch,
  kEncoderFailure,
  kConfigError,
};

std::string_view error_code_name(ErrorCode code);

// Every domain failure in the library is reported as a codefend::Error. The
// code is stable and is what callers (and the CLI exit-code mapping) match on;
// the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  // The message without the "Name: " prefix.
  const std::string& detail() const noexcept { return detail_; }
  // Same code, message prefixed with "where: ".
  Error in_context(std::string_view where) const {
    return Error(code_, std::string(where) + ": " + detail_);
  }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace codefend
