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

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "podforge/audio.hpp"
#include "podforge/codec.hpp"
#include "podforge/model.hpp"
#include "podforge/protocol.hpp"

namespace podforge {

enum class SynthesisMode { kZeroShot, kSft };

const char* mode_name(SynthesisMode mode);
SynthesisMode parse_mode(std::string_view name);

struct SynthesisRequest {
  std::string target_text;
  SynthesisMode mode = SynthesisMode::kSft;
  std::string ref_text;   // zero-shot only
  Waveform ref_audio;     // zero-shot only
  std::uint64_t seed = 0;
  double max_seconds_per_sentence = 60.0;
};

struct SentenceSpan {
  std::string text;
  double start_s = 0.0;
  double end_s = 0.0;
};

struct SynthesisResult {
  Waveform audio;
  double t_inf = 0.0;  // wall clock, seconds
  double t_syn = 0.0;  // output duration, seconds
  std::vector<SentenceSpan> sentence_spans;
  bool truncated = false;
  bool degraded = false;  // at least one sentence was skipped
  std::vector<std::string> warnings;
  std::size_t first_token_audio = 0;  // sentences whose first generated id was audio
  std::size_t sentences_attempted = 0;
};

struct SynthesisOptions {
  std::size_t workers = 1;
  bool split_sentences = true;
  double temperature = 1.0;
  std::string sft_template = std::string(kDefaultSftTemplate);
  double crossfade_ms = 10.0;
  DecodeOptions decode;
};

/// Trims, collapses whitespace runs, capitalizes each sentence's first
/// letter and appends "." unless the text already ends in . ! or ?.
std::string normalize_text(std::string_view s);

/// Splits after . ! or ? when followed by whitespace or the end.
std::vector<std::string> split_sentences(std::string_view s);

/// Joins segments with a linear crossfade of `crossfade_ms`.
Waveform concatenate(std::span<const Waveform> segments, double crossfade_ms = 10.0);

SynthesisResult synthesize(const SynthesisRequest& req, const SequenceModel& model,
                           const MergedVocab& vocab, const Codebook& cb,
                           const SynthesisOptions& options = {});

}  // namespace podforge
