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
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "podforge/audio.hpp"
#include "podforge/random.hpp"

namespace podforge {

/// Parameters of a formant-synthesis voice used by the test corpora.
struct VoiceProfile {
  std::string name;
  double f0 = 120.0;          // mean pitch, Hz
  double tract_scale = 1.0;   // formant frequency multiplier
  double tilt = 0.9;          // one-pole source lowpass coefficient
  double breath = 0.05;       // aspiration noise relative to voicing
  int emphasis = 0;           // first-difference stages on the output
};

/// A fixed roster of distinct voices; index 0 and 1 are the most different.
const std::vector<VoiceProfile>& fixture_voices();

struct SpeechOptions {
  double level = 0.12;       // target 90th-percentile frame RMS
  double noise_rms = 3e-4;   // background floor over the whole utterance
  double word_gap_min_s = 0.12;
  double word_gap_max_s = 0.20;
  double lead_s = 0.05;      // silence before the first and after the last word
};

/// Renders `text` word by word. Each word's syllables, vowels and consonants
/// derive from a hash of the lowercased word; `seed` drives pauses, pitch
/// drift and noise.
Waveform synthesize_voice(const VoiceProfile& voice, std::string_view text, std::uint64_t seed,
                          const SpeechOptions& options = {});

/// Fixed word list shared by the generators.
const std::vector<std::string>& fixture_words();

/// Capitalized sentence of `words` random words ending in ".".
std::string random_sentence(Rng& rng, std::size_t words);

/// `n` sentences of `words_each` words with no word used twice.
std::vector<std::string> distinct_sentences(std::size_t n, std::size_t words_each,
                                            std::uint64_t seed);

/// Appends sentences until the rendered audio is at least `min_s` long.
struct VoicedText {
  std::string text;
  Waveform audio;
};
VoicedText speech_at_least(const VoiceProfile& voice, double min_s, std::uint64_t seed,
                           const SpeechOptions& options = {});

/// On-disk corpus for the pipeline: long source recordings with 1.2 s
/// pauses between utterances, a ground-truth span file, and a known share of
/// utterances buried in noise so that they score below the quality bar.
struct CorpusSpec {
  std::size_t sources = 20;
  std::size_t utterances_per_source = 5;
  double utterance_s = 6.0;
  double pause_s = 1.2;
  // Utterance k (global index) is noisy when k % 10 is in this set.
  std::vector<std::size_t> noisy_residues = {1, 4, 7};
  std::size_t voice = 0;
  std::uint64_t seed = 7;
};

struct FixtureUtterance {
  std::string source;
  std::string text;
  double start_s = 0.0;
  double end_s = 0.0;
  bool noisy = false;
};

struct FixtureTree {
  std::vector<std::filesystem::path> sources;
  std::filesystem::path truth;
  std::vector<FixtureUtterance> utterances;
};

/// Writes `<dir>/sources/src_NNN.wav` and `<dir>/truth.jsonl`.
FixtureTree write_fixture_tree(const std::filesystem::path& dir, const CorpusSpec& spec = {});

}  // namespace podforge
