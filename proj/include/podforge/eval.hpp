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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "podforge/audio.hpp"
#include "podforge/codec.hpp"
#include "podforge/model.hpp"
#include "podforge/protocol.hpp"
#include "podforge/synthesis.hpp"

namespace podforge {

class Transcriber;
class QualityScorer;

/// Lowercased, punctuation-stripped, whitespace-split words.
std::vector<std::string> normalize_words(std::string_view text);
/// Word-level Levenshtein distance with unit costs.
std::size_t edit_distance(std::span<const std::string> ref, std::span<const std::string> hyp);
double wer(std::string_view reference, std::string_view hypothesis);

inline constexpr std::size_t kEmbeddingDims = 2 * kMfccDims;

/// MFCC-13 mean followed by MFCC-13 standard deviation.
struct SpeakerEmbedding {
  std::array<double, kEmbeddingDims> values{};
};

SpeakerEmbedding speaker_embedding(const Waveform& w);
/// Cosine similarity; 0 when either vector is all zeros.
double cosine_similarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b);
double sim(const Waveform& a, const Waveform& b);

struct SpeedMeasurement {
  double t_inf = 0.0;
  double t_syn = 0.0;
  double r = 0.0;
};
SpeedMeasurement speed_ratio(double t_inf, double t_syn);

struct EvalRow {
  std::string model_name;
  std::string dataset_name;
  double wer_pct = 0.0;
  double mos = 1.0;
  double sim = 0.0;
  double r = 0.0;

  friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

struct RecordResult {
  std::string id;
  std::optional<std::string> error;
  double wer = 0.0;
  double sim = 0.0;
  double mos = 1.0;
  double t_inf = 0.0;
  double t_syn = 0.0;
  double r = 0.0;
  std::string hypothesis;

  friend bool operator==(const RecordResult&, const RecordResult&) = default;
};

struct EvalMetadata {
  std::string timestamp;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::string mode;
  std::size_t records_total = 0;
  std::size_t records_failed = 0;

  friend bool operator==(const EvalMetadata&, const EvalMetadata&) = default;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  EvalMetadata metadata;
  std::vector<RecordResult> records;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Keys in fixed order.
nlohmann::ordered_json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
std::string report_json_string(const EvalReport& r);
void save_report(const EvalReport& r, const std::filesystem::path& path);
EvalReport load_report(const std::filesystem::path& path);
/// Copy with timestamp and wall-clock fields zeroed, for comparisons.
EvalReport without_timing(EvalReport r);

/// Aligned text table with the WER/MOS/SIM columns.
std::string render_table(const EvalReport& r);
/// Model and speed-ratio columns only.
std::string render_speed_table(const EvalReport& r);

/// One dataset row: ground truth plus optional zero-shot prompt.
struct EvalItem {
  std::string id;
  std::string text;
  Waveform reference;
  std::optional<std::string> ref_text;
  std::optional<Waveform> ref_audio;
};

/// Manifest JSONL with text; audio at `<dir>/audio/<id>.wav`; zero-shot rows
/// carry `ref_text` and `ref_audio_path` (relative to the manifest dir).
std::vector<EvalItem> load_eval_dataset(const std::filesystem::path& manifest);

struct EvalOptions {
  SynthesisMode mode = SynthesisMode::kSft;
  std::uint64_t seed = 0;
  std::string model_name = "podforge-ngram";
  std::string dataset_name = "fixture";
  std::string config_digest;
  std::string timestamp;  // filled with the current UTC time when empty
  double temperature = 1.0;
  std::string sft_template{kDefaultSftTemplate};
  double max_seconds_per_sentence = 60.0;
  // Parallelism across records; each record still runs on one worker.
  std::size_t workers = 1;
};

EvalReport run_eval(std::span<const EvalItem> dataset, const SequenceModel& model,
                    const MergedVocab& vocab, const Codebook& cb, const Transcriber& transcriber,
                    const QualityScorer& scorer, const EvalOptions& options);
EvalReport run_eval(const std::filesystem::path& manifest, const SequenceModel& model,
                    const MergedVocab& vocab, const Codebook& cb, const Transcriber& transcriber,
                    const QualityScorer& scorer, const EvalOptions& options);

}  // namespace podforge
