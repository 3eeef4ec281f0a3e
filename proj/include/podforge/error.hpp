// Copyright 2026 The PodForge Authors
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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace podforge {

// Values are mirrored one-to-one by pf_status in podforge.h.
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kIoFailure,
  kMalformedContainer,
  kUnsupportedEncoding,
  kTooShort,
  kEmptyAudio,
  kStageFailure,
  kMissingScore,
  kTranscriberFailure,
  kCodecMismatch,
  kMixedSpeakers,
  kInsufficientData,
  kInvalidToken,
  kEmptyCorpus,
  kNonAudioToken,
  kBackendUnreachable,
  kInvalidBackendOutput,
  kTimeout,
  kEmptyText,
  kAllSentencesFailed,
  kRateMismatch,
  kZeroDuration,
  kPrecondition,
  kUnsupported,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// A text id was found inside generated audio before the end marker.
class NonAudioTokenError : public Error {
 public:
  explicit NonAudioTokenError(std::size_t position)
      : Error(ErrorCode::kNonAudioToken,
              "text token at position " + std::to_string(position)),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

}  // namespace podforge
