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

#include "codefend/core/error.hpp"

namespace codefend {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kMissingFile: return "MissingFile";
    case ErrorCode::kSchemaError: return "SchemaError";
    case ErrorCode::kDanglingRef: return "DanglingRef";
    case ErrorCode::kDegenerateSplit: return "DegenerateSplit";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kOracleFailure: return "OracleFailure";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kStepOutOfRange: return "StepOutOfRange";
    case ErrorCode::kEmptySplit: return "EmptySplit";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kCheckpointCorrupt: return "CheckpointCorrupt";
    case ErrorCode::kSamplerDiverged: return "SamplerDiverged";
    case ErrorCode::kPositionNotMutable: return "PositionNotMutable";
    case ErrorCode::kAlignmentError: return "AlignmentError";
    case ErrorCode::kEmptyPrefix: return "EmptyPrefix";
    case ErrorCode::kRankTooLarge: return "RankTooLarge";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kBaseMismatch: return "BaseMismatch";
    case ErrorCode::kStageFailure: return "StageFailure";
    case ErrorCode::kUnresolvedRole: return "UnresolvedRole";
    case ErrorCode::kUnknownProvider: return "UnknownProvider";
    case ErrorCode::kUntargetedItem: return "UntargetedItem";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEncoderFailure: return "EncoderFailure";
    case ErrorCode::kConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace codefend
