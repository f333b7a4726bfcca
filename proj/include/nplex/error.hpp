// Copyright 2026 The nplex Authors. All Rights Reserved.
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

namespace nplex {

enum class ErrorCode {
  InvalidArgument,
  IntegrationDiverged,
  TrajectoryTooShort,
  DimensionMismatch,
  DegenerateDenominator,
  InfeasibleEta,
  RankDeficientSelection,
  DegenerateSignal,
  ZeroColumn,
  InsufficientData,
  ConfigError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IntegrationDiverged: return "IntegrationDiverged";
    case ErrorCode::TrajectoryTooShort: return "TrajectoryTooShort";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorCode::InfeasibleEta: return "InfeasibleEta";
    case ErrorCode::RankDeficientSelection: return "RankDeficientSelection";
    case ErrorCode::DegenerateSignal: return "DegenerateSignal";
    case ErrorCode::ZeroColumn: return "ZeroColumn";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the experiment driver in particular) can record it per trial.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace nplex
