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

#include "podforge/synthesis.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <optional>

#include "podforge/error.hpp"
#include "podforge/parallel.hpp"

namespace podforge {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

struct SentenceOutcome {
  Waveform audio;
  bool ok = false;
  bool truncated = false;
  bool first_audio = false;
  std::string warning;
};

}  // namespace

const char* mode_name(SynthesisMode mode) {
  return mode == SynthesisMode::kSft ? "sft" : "zero_shot";
}

SynthesisMode parse_mode(std::string_view name) {
  if (name == "sft") return SynthesisMode::kSft;
  if (name == "zero_shot" || name == "zero-shot") return SynthesisMode::kZeroShot;
  throw Error(ErrorCode::kInvalidArgument, "unknown mode '" + std::string(name) + "'");
}

std::string normalize_text(std::string_view s) {
  std::string collapsed;
  for (char c : s) {
    if (is_space(c)) {
      if (!collapsed.empty() && collapsed.back() != ' ') collapsed.push_back(' ');
    } else {
      collapsed.push_back(c);
    }
  }
  while (!collapsed.empty() && collapsed.back() == ' ') collapsed.pop_back();
  if (collapsed.empty()) throw Error(ErrorCode::kEmptyText, "text is empty after trimming");

  bool sentence_start = true;
  for (std::size_t i = 0; i < collapsed.size(); ++i) {
    const char c = collapsed[i];
    if (sentence_start && is_alpha(c)) {
      collapsed[i] = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      sentence_start = false;
    } else if (is_terminal(c) && (i + 1 == collapsed.size() || collapsed[i + 1] == ' ')) {
      sentence_start = true;
    }
  }
  if (!is_terminal(collapsed.back())) collapsed.push_back('.');
  return collapsed;
}

std::vector<std::string> split_sentences(std::string_view s) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    std::size_t a = 0, b = current.size();
    while (a < b && is_space(current[a])) ++a;
    while (b > a && is_space(current[b - 1])) --b;
    if (b > a) out.push_back(current.substr(a, b - a));
    current.clear();
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    current.push_back(s[i]);
    if (is_terminal(s[i]) && (i + 1 == s.size() || is_space(s[i + 1]))) flush();
  }
  flush();
  return out;
}

Waveform concatenate(std::span<const Waveform> segments, double crossfade_ms) {
  Waveform out;
  if (segments.empty()) return out;
  out.sample_rate = segments.front().sample_rate;
  for (const auto& s : segments) {
    if (s.sample_rate != out.sample_rate) {
      throw Error(ErrorCode::kRateMismatch, "segments have different sample rates");
    }
  }
  const auto fade = static_cast<std::size_t>(
      std::llround(crossfade_ms * static_cast<double>(out.sample_rate) / 1000.0));
  out.samples = segments.front().samples;
  for (std::size_t k = 1; k < segments.size(); ++k) {
    const auto& next = segments[k].samples;
    const std::size_t n = std::min({fade, out.samples.size(), next.size()});
    const std::size_t base = out.samples.size() - n;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      const double a = out.samples[base + i];
      const double b = next[i];
      out.samples[base + i] = static_cast<float>(a + (b - a) * t);
    }
    out.samples.insert(out.samples.end(), next.begin() + static_cast<std::ptrdiff_t>(n), next.end());
  }
  return out;
}

SynthesisResult synthesize(const SynthesisRequest& req, const SequenceModel& model,
                           const MergedVocab& vocab, const Codebook& cb,
                           const SynthesisOptions& options) {
  if (options.workers < 1) throw Error(ErrorCode::kPrecondition, "workers must be >= 1");
  if (req.mode == SynthesisMode::kZeroShot) {
    if (req.ref_text.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw Error(ErrorCode::kPrecondition, "zero-shot synthesis needs reference text");
    }
    if (req.ref_audio.samples.size() < kWindow) {
      throw Error(ErrorCode::kPrecondition, "zero-shot synthesis needs >= 1024 reference samples");
    }
  }
  const auto started = std::chrono::steady_clock::now();

  const std::string normalized = normalize_text(req.target_text);
  std::vector<std::string> sentences =
      options.split_sentences ? split_sentences(normalized) : std::vector<std::string>{normalized};

  AudioTokens ref_tokens;
  if (req.mode == SynthesisMode::kZeroShot) {
    ref_tokens = encode(req.ref_audio.sample_rate == kCanonicalRate
                            ? req.ref_audio
                            : resample(req.ref_audio, kCanonicalRate),
                        cb);
  }
  const auto cap = static_cast<std::size_t>(
      std::max(1.0, std::floor(req.max_seconds_per_sentence * kTokenRate)));

  std::vector<SentenceOutcome> outcomes(sentences.size());
  parallel_for(sentences.size(), options.workers, [&](std::size_t i) {
    const TokenSequence prompt =
        req.mode == SynthesisMode::kSft
            ? render_sft_prompt(vocab, sentences[i], options.sft_template)
            : assemble_zero_shot_prompt(vocab, req.ref_text, sentences[i], ref_tokens);
    const TokenSequence generated = model.generate(prompt, cap + 1, req.seed + i, options.temperature);
    SentenceOutcome& o = outcomes[i];
    o.first_audio = !generated.empty() && vocab.is_audio(generated.front());
    try {
      ParsedAudio parsed = parse_generated(vocab, generated);
      if (parsed.ids.size() > cap) {
        parsed.ids.resize(cap);
        parsed.truncated = true;
      }
      o.truncated = parsed.truncated;
      if (parsed.ids.empty()) {
        o.warning = "sentence " + std::to_string(i) + ": no audio tokens generated";
        return;
      }
      o.audio = decode(parsed.ids, cb, options.decode);
      o.ok = true;
    } catch (const NonAudioTokenError& e) {
      o.warning = "sentence " + std::to_string(i) + ": " + e.what();
    }
  });

  SynthesisResult result;
  result.sentences_attempted = sentences.size();
  std::vector<Waveform> segments;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    auto& o = outcomes[i];
    result.truncated = result.truncated || o.truncated;
    if (o.first_audio) ++result.first_token_audio;
    if (!o.ok) {
      result.degraded = true;
      result.warnings.push_back(std::move(o.warning));
      continue;
    }
    segments.push_back(std::move(o.audio));
    kept.push_back(i);
  }
  if (segments.empty()) {
    throw Error(ErrorCode::kAllSentencesFailed,
                std::to_string(sentences.size()) + " sentence(s), none produced audio");
  }
  result.audio = concatenate(segments, options.crossfade_ms);

  const auto fade = static_cast<std::size_t>(
      std::llround(options.crossfade_ms * static_cast<double>(result.audio.sample_rate) / 1000.0));
  const double rate = result.audio.sample_rate;
  std::size_t offset = 0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const std::size_t len = segments[s].samples.size();
    std::size_t next_offset = result.audio.samples.size();
    if (s + 1 < segments.size()) {
      const std::size_t overlap = std::min({fade, offset + len, segments[s + 1].samples.size()});
      next_offset = offset + len - overlap;
    }
    result.sentence_spans.push_back(
        {sentences[kept[s]], static_cast<double>(offset) / rate, static_cast<double>(next_offset) / rate});
    offset = next_offset;
  }

  result.t_syn = result.audio.duration_s();
  result.t_inf = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace podforge
