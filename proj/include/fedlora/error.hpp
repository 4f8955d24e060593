/*
 * Copyright 2026 The fedlora Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FEDLORA_ERROR_HPP_
#define FEDLORA_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace fedlora {

enum class ErrorKind {
  kInvalidArgument,
  kZeroVector,
  kNotUnit,
  kRankTooLarge,
  kShapeMismatch,
  kBadSpec,
  kBadAngle,
  kPopulationMode,
  kFiniteSampleMode,
  kDegenerateDesign,
  kBadPartition,
  kFrozenFactorMismatch,
  kDivergenceDetected,
  kStepTooLarge,
  kBadRange,
  kParseError,
  kValidationError,
  kIoError,
  kSchemaMismatch,
};

std::string_view ErrorKindName(ErrorKind kind);

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + what),
        kind_(kind),
        message_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  // what() without the kind prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

inline std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kZeroVector: return "ZeroVector";
    case ErrorKind::kNotUnit: return "NotUnit";
    case ErrorKind::kRankTooLarge: return "RankTooLarge";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kBadSpec: return "BadSpec";
    case ErrorKind::kBadAngle: return "BadAngle";
    case ErrorKind::kPopulationMode: return "PopulationMode";
    case ErrorKind::kFiniteSampleMode: return "FiniteSampleMode";
    case ErrorKind::kDegenerateDesign: return "DegenerateDesign";
    case ErrorKind::kBadPartition: return "BadPartition";
    case ErrorKind::kFrozenFactorMismatch: return "FrozenFactorMismatch";
    case ErrorKind::kDivergenceDetected: return "DivergenceDetected";
    case ErrorKind::kStepTooLarge: return "StepTooLarge";
    case ErrorKind::kBadRange: return "BadRange";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kValidationError: return "ValidationError";
    case ErrorKind::kIoError: return "IoError";
    case ErrorKind::kSchemaMismatch: return "SchemaMismatch";
  }
  return "Unknown";
}

}  // namespace fedlora

#endif  // FEDLORA_ERROR_HPP_
