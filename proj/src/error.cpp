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

#include "podforge/error.hpp"

namespace podforge {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kMalformedContainer: return "MalformedContainer";
    case ErrorCode::kUnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorCode::kTooShort: return "TooShort";
    case ErrorCode::kEmptyAudio: return "EmptyAudio";
    case ErrorCode::kStageFailure: return "StageFailure";
    case ErrorCode::kMissingScore: return "MissingScore";
    case ErrorCode::kTranscriberFailure: return "TranscriberFailure";
    case ErrorCode::kCodecMismatch: return "CodecMismatch";
    case ErrorCode::kMixedSpeakers: return "MixedSpeakers";
    case ErrorCode::kInsufficientData: return "InsufficientData";
    case ErrorCode::kInvalidToken: return "InvalidToken";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kNonAudioToken: return "NonAudioToken";
    case ErrorCode::kBackendUnreachable: return "BackendUnreachable";
    case ErrorCode::kInvalidBackendOutput: return "InvalidBackendOutput";
    case ErrorCode::kTimeout: return "Timeout";
    case ErrorCode::kEmptyText: return "EmptyText";
    case ErrorCode::kAllSentencesFailed: return "AllSentencesFailed";
    case ErrorCode::kRateMismatch: return "RateMismatch";
    case ErrorCode::kZeroDuration: return "ZeroDuration";
    case ErrorCode::kPrecondition: return "PreconditionViolation";
    case ErrorCode::kUnsupported: return "Unsupported";
  }
  return "Unknown";
}

}  // namespace podforge
