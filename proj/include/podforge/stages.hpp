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

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "podforge/codec.hpp"
#include "podforge/config.hpp"
#include "podforge/eval.hpp"
#include "podforge/model.hpp"
#include "podforge/pipeline.hpp"
#include "podforge/protocol.hpp"
#include "podforge/synthesis.hpp"

namespace podforge {

// File-level drivers behind the CLI and the C API. Every manifest stage
// reads a manifest whose audio lives in `<manifest dir>/audio/<id>.wav` and
// writes the same layout next to its output manifest.

struct StageSummary {
  std::size_t input = 0;
  std::size_t output = 0;
  std::size_t dropped = 0;
  std::vector<std::string> notes;
};

std::filesystem::path audio_path(const std::filesystem::path& manifest, const std::string& id);
std::vector<Utterance> load_utterances(const std::filesystem::path& manifest);

/// WAV files or directories of WAV files (sorted by name) into 60 s chunks.
/// A non-empty `speaker` is recorded as the speaker_id of every chunk.
StageSummary stage_ingest(const std::vector<std::filesystem::path>& inputs,
                          const std::filesystem::path& out, const AppConfig& cfg,
                          const std::string& speaker = "");
StageSummary stage_clean(const std::filesystem::path& manifest, const std::filesystem::path& out,
                         const AppConfig& cfg);
StageSummary stage_segment(const std::filesystem::path& manifest, const std::filesystem::path& out,
                           const AppConfig& cfg);
/// Scores every record, then keeps those strictly above `threshold`.
/// Dropped records go to `<out dir>/dropped.jsonl`.
StageSummary stage_score(const std::filesystem::path& manifest, const std::filesystem::path& out,
                         const AppConfig& cfg, double threshold);
StageSummary stage_filter_speaker(const std::filesystem::path& manifest,
                                  const std::filesystem::path& out, const AppConfig& cfg);
StageSummary stage_transcribe(const std::filesystem::path& manifest,
                              const std::filesystem::path& out, const AppConfig& cfg);
StageSummary stage_format_pretrain(const std::filesystem::path& manifest,
                                   const std::filesystem::path& codec,
                                   const std::filesystem::path& out);
StageSummary stage_format_sft(const std::filesystem::path& manifest,
                              const std::filesystem::path& codec,
                              const std::filesystem::path& out);
/// Trains on records with mos above the decoder threshold only.
StageSummary stage_train_codec(const std::filesystem::path& manifest,
                               const std::filesystem::path& out, const AppConfig& cfg);

/// Vocabulary plus n-gram model in one file.
struct ModelBundle {
  MergedVocab vocab;
  NGramModel model;

  std::vector<std::uint8_t> serialize() const;
  static ModelBundle deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static ModelBundle load(const std::filesystem::path& path);
};

/// Token sequences for the model: pretrain lines as text ++ audio ++ END and
/// SFT records as the rendered prompt ++ audio ++ END.
struct TrainingCorpus {
  std::vector<std::string> pretrain_texts;
  std::vector<AudioTokens> pretrain_audio;
  std::vector<std::string> sft_instructions;
  std::vector<AudioTokens> sft_audio;
};
TrainingCorpus read_training_corpus(const std::optional<std::filesystem::path>& pretrain,
                                    const std::optional<std::filesystem::path>& sft);
ModelBundle train_bundle(const TrainingCorpus& corpus, const AppConfig& cfg);
StageSummary stage_train_lm(const std::optional<std::filesystem::path>& pretrain,
                            const std::optional<std::filesystem::path>& sft,
                            const std::filesystem::path& out, const AppConfig& cfg);

struct SynthRequestFiles {
  std::string text;
  SynthesisMode mode = SynthesisMode::kSft;
  std::string ref_text;
  std::optional<std::filesystem::path> ref_audio;
  std::filesystem::path model;
  std::filesystem::path codec;
  std::filesystem::path out;
};
SynthesisResult stage_synth(const SynthRequestFiles& req, const AppConfig& cfg);

/// Options shared by the engine users: workers, temperature, template, cap.
SynthesisOptions synthesis_options(const AppConfig& cfg);
/// Built-in model from the bundle, or the configured HTTP backend.
std::unique_ptr<SequenceModel> make_model(const ModelBundle& bundle, const AppConfig& cfg);

/// Default transcriber for evaluation: the configured external command, or
/// a lookup that knows each dataset text, its span truth file if any, and the
/// codec resynthesis of each reference clip.
std::unique_ptr<Transcriber> eval_transcriber(std::span<const EvalItem> items, const Codebook& cb,
                                              const AppConfig& cfg);
std::unique_ptr<QualityScorer> make_scorer(const AppConfig& cfg);
std::unique_ptr<Transcriber> make_transcriber(const AppConfig& cfg);

struct EvalFiles {
  std::filesystem::path manifest;
  std::filesystem::path model;
  std::filesystem::path codec;
  std::filesystem::path out;  // report JSON
  SynthesisMode mode = SynthesisMode::kSft;
  std::string model_name = "podforge-ngram";
  std::string dataset_name;
};
EvalReport stage_eval(const EvalFiles& files, const AppConfig& cfg);

/// ingest -> clean -> segment -> score -> filter-speaker -> transcribe ->
/// train-codec -> format-pretrain -> format-sft under `work`.
StageSummary stage_pipeline(const std::vector<std::filesystem::path>& inputs,
                            const std::filesystem::path& work, const AppConfig& cfg,
                            const std::string& speaker = "");

}  // namespace podforge
