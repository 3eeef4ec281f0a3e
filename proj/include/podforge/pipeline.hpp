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
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "podforge/audio.hpp"
#include "podforge/codec.hpp"

namespace podforge {

enum class Stage { kChunked, kCleaned, kSegmented, kScored, kSpeakerFiltered, kTranscribed };

const char* stage_name(Stage s);
Stage parse_stage(std::string_view name);

/// One utterance's row in the corpus ledger.
struct ManifestRecord {
  std::string id;
  std::string source_path;
  double start_s = 0.0;
  double end_s = 0.0;
  double duration_s = 0.0;
  int sample_rate = kCanonicalRate;
  std::optional<double> mos;
  std::optional<int> speaker_count;
  std::optional<std::string> speaker_id;
  std::optional<std::string> text;
  Stage stage = Stage::kChunked;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

/// Moves a record to the stage immediately after its current one; anything
/// else is a precondition violation.
void advance_stage(ManifestRecord& r, Stage next);

// JSONL, keys in field order, absent optionals omitted.
std::string manifest_line(const ManifestRecord& r);
ManifestRecord parse_manifest_line(std::string_view line);
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestRecord> records);

/// Serializes concurrent appends to one manifest file.
class ManifestAppender {
 public:
  explicit ManifestAppender(const std::filesystem::path& path);
  void append(const ManifestRecord& r);

 private:
  std::mutex mu_;
  std::ofstream out_;
};

struct Utterance {
  Waveform audio;
  ManifestRecord record;
};

// --- cleaning -------------------------------------------------------------

class CleaningStage {
 public:
  virtual ~CleaningStage() = default;
  virtual std::string name() const = 0;
  virtual Waveform apply(const Waveform& w) const = 0;
};

/// Butterworth highpass built from cascaded biquads.
class HighpassStage final : public CleaningStage {
 public:
  explicit HighpassStage(double cutoff_hz = 80.0, int order = 6);
  std::string name() const override { return "highpass"; }
  Waveform apply(const Waveform& w) const override;

 private:
  double cutoff_hz_;
  int order_;
};

/// Zeroes time-frequency cells whose locally averaged magnitude stays below
/// `factor` times the per-bin noise floor. The floor is the mean magnitude of
/// the quietest 20% of frames.
class SpectralGateStage final : public CleaningStage {
 public:
  explicit SpectralGateStage(double factor = 2.0) : factor_(factor) {}
  std::string name() const override { return "spectral-gate"; }
  Waveform apply(const Waveform& w) const override;

 private:
  double factor_;
};

/// Wraps a function; used for external or test stages.
class FunctionStage final : public CleaningStage {
 public:
  FunctionStage(std::string name, std::function<Waveform(const Waveform&)> fn)
      : name_(std::move(name)), fn_(std::move(fn)) {}
  std::string name() const override { return name_; }
  Waveform apply(const Waveform& w) const override { return fn_(w); }

 private:
  std::string name_;
  std::function<Waveform(const Waveform&)> fn_;
};

std::vector<std::shared_ptr<const CleaningStage>> default_cleaning_stages();

/// Runs stages in order; failures surface as StageFailure naming the stage.
Waveform apply_cleaning(const Waveform& w,
                        std::span<const std::shared_ptr<const CleaningStage>> stages);

// --- scoring and transcription -------------------------------------------

class QualityScorer {
 public:
  virtual ~QualityScorer() = default;
  virtual double score(const Waveform& w) const = 0;
};

/// MOS proxy from the spread of frame RMS: 20 log10(p90 / p10) mapped
/// linearly from [0, 40] dB onto [1, 5].
class SnrProxyScorer final : public QualityScorer {
 public:
  double score(const Waveform& w) const override;
};

/// Child process reading one WAV path per stdin line and printing one
/// decimal score per line.
class ExternalScorer final : public QualityScorer {
 public:
  explicit ExternalScorer(std::string command) : command_(std::move(command)) {}
  double score(const Waveform& w) const override;

 private:
  std::string command_;
};

class Transcriber {
 public:
  virtual ~Transcriber() = default;
  // `context` carries the record being transcribed when one exists.
  virtual std::string transcribe(const Waveform& w, const ManifestRecord* context) const = 0;
};

/// Ground-truth lookup for fixtures. Matches either an exact audio
/// fingerprint or, given a record, the registered span of the same source
/// that covers most of it.
class LookupTranscriber final : public Transcriber {
 public:
  void add_fingerprint(const Waveform& w, std::string text);
  void add_fingerprint(std::string fingerprint, std::string text);
  void add_span(std::string source_path, double start_s, double end_s, std::string text);
  /// JSONL rows of {"fingerprint", "text"} or {"source_path", "start_s", "end_s", "text"}.
  static LookupTranscriber load(const std::filesystem::path& truth);
  void save(const std::filesystem::path& truth) const;

  std::string transcribe(const Waveform& w, const ManifestRecord* context) const override;
  std::size_t size() const { return by_fingerprint_.size() + spans_.size(); }

 private:
  struct Span {
    std::string source;
    double start_s, end_s;
    std::string text;
  };
  std::map<std::string, std::string> by_fingerprint_;
  std::vector<Span> spans_;
};

/// Same line protocol as ExternalScorer, returning the line verbatim.
class ExternalTranscriber final : public Transcriber {
 public:
  explicit ExternalTranscriber(std::string command) : command_(std::move(command)) {}
  std::string transcribe(const Waveform& w, const ManifestRecord* context) const override;

 private:
  std::string command_;
};

/// Hex digest of the 16-bit quantized samples and the sample rate.
std::string audio_fingerprint(const Waveform& w);

/// Runs `command` with one path per stdin line; returns one line per path.
std::vector<std::string> run_line_protocol(const std::string& command,
                                           std::span<const std::filesystem::path> inputs);

// --- pipeline operations --------------------------------------------------

std::vector<Utterance> chunk_audio(const Waveform& w, const std::string& source_path,
                                   const std::string& id_prefix, double chunk_s = 60.0);

/// Voice-activity segmentation of one (cleaned) chunk.
std::vector<Utterance> segment_utterances(const Waveform& w, const ManifestRecord& parent,
                                          double min_s = 5.0, double max_s = 60.0);

/// Speech regions as [start, end) sample ranges, before length rules.
std::vector<std::pair<std::size_t, std::size_t>> detect_speech(const Waveform& w);

double score_quality(const Waveform& w, const QualityScorer& scorer);

struct QualityPartition {
  std::vector<ManifestRecord> kept;
  std::vector<ManifestRecord> dropped;
};
/// kept = mos > threshold (strict). Kept records advance to `scored`.
QualityPartition filter_quality(std::span<const ManifestRecord> records, double threshold = 3.8);

struct SpeakerCheck {
  double max_distance = 0.0;
  std::size_t windows = 0;
};
/// Max pairwise cosine distance between 2 s windows (1 s hop).
SpeakerCheck speaker_spread(const Waveform& w);
std::optional<ManifestRecord> filter_single_speaker(const Waveform& w, const ManifestRecord& r,
                                                    double max_distance = 0.35);

ManifestRecord transcribe(const Waveform& w, const Transcriber& t, const ManifestRecord& r);

std::string pretrain_line(const std::string& text, std::span<const std::uint32_t> audio);
std::size_t build_pretrain_corpus(std::span<const Utterance> utterances, const Codebook& cb,
                                  const std::filesystem::path& out);
std::size_t build_sft_corpus(std::span<const Utterance> utterances, const Codebook& cb,
                             const std::filesystem::path& out);

}  // namespace podforge
