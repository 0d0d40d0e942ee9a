// Copyright 2026 The domixt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace domixt {

/// Every failure the library reports carries one of these codes.
enum class ErrorCode {
  // corpus
  LineCountMismatch,
  EncodingError,
  EmptyFile,
  AlreadyTagged,
  TargetTooSmall,
  CapTooSmall,
  PolicyViolation,
  // subword
  EmptyProfile,
  // nncore
  ShapeMismatch,
  InvalidRate,
  // seq2seq
  IdOutOfRange,
  EmptyBatch,
  HyperParamMismatch,
  BadCheckpoint,
  // schedules
  UnknownSchedule,
  MissingCorpus,
  DivergenceDetected,
  // eval
  LengthMismatch,
  EmptyInput,
  // synthgen
  InvalidSpec,
  UnknownToken,
  // cli / io
  ConfigError,
  IoError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::LineCountMismatch: return "LineCountMismatch";
    case ErrorCode::EncodingError: return "EncodingError";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::AlreadyTagged: return "AlreadyTagged";
    case ErrorCode::TargetTooSmall: return "TargetTooSmall";
    case ErrorCode::CapTooSmall: return "CapTooSmall";
    case ErrorCode::PolicyViolation: return "PolicyViolation";
    case ErrorCode::EmptyProfile: return "EmptyProfile";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidRate: return "InvalidRate";
    case ErrorCode::IdOutOfRange: return "IdOutOfRange";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::HyperParamMismatch: return "HyperParamMismatch";
    case ErrorCode::BadCheckpoint: return "BadCheckpoint";
    case ErrorCode::UnknownSchedule: return "UnknownSchedule";
    case ErrorCode::MissingCorpus: return "MissingCorpus";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Coarse failure classes; the CLI maps these onto exit codes.
enum class ErrorClass { Config, Data, Training };

inline ErrorClass error_class(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::UnknownSchedule:
    case ErrorCode::InvalidSpec:
    case ErrorCode::InvalidRate:
    case ErrorCode::PolicyViolation:
      return ErrorClass::Config;
    case ErrorCode::DivergenceDetected:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::HyperParamMismatch:
    case ErrorCode::EmptyBatch:
      return ErrorClass::Training;
    default:
      return ErrorClass::Data;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

namespace detail {

template <class... Args>
[[noreturn]] void fail(ErrorCode code, const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  throw Error(code, os.str());
}

}  // namespace detail
}  // namespace domixt
