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

#include "podforge/pipeline.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "podforge/error.hpp"
#include "podforge/eval.hpp"
#include "podforge/protocol.hpp"
#include "podforge/spectral.hpp"

namespace podforge {
namespace {

constexpr std::array<const char*, 6> kStageNames = {
    "chunked", "cleaned", "segmented", "scored", "speaker_filtered", "transcribed"};

// VAD hysteresis.
constexpr double kVadOn = 0.02;
constexpr double kVadOff = 0.01;
constexpr std::size_t kVadOnFrames = 3;
// 300 ms of 40 ms frames, rounded up.
constexpr std::size_t kVadOffFrames = 8;

std::string three_digits(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", i);
  return buf;
}

Waveform slice(const Waveform& w, std::size_t begin, std::size_t end) {
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(w.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                     w.samples.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + (v[hi] - v[lo]) * frac;
}

std::filesystem::path temp_path(std::string_view suffix) {
  static std::atomic<std::uint64_t> counter{0};
  return std::filesystem::temp_directory_path() /
         ("podforge-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) +
          std::string(suffix));
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

std::string canonical_source(const std::string& p) {
  std::error_code ec;
  auto c = std::filesystem::weakly_canonical(p, ec);
  return ec ? p : c.string();
}

// RBJ highpass biquad in transposed direct form II.
struct Biquad {
  double b0, b1, b2, a1, a2;
  double z1 = 0.0, z2 = 0.0;

  double step(double x) {
    const double y = b0 * x + z1;
    z1 = b1 * x - a1 * y + z2;
    z2 = b2 * x - a2 * y;
    return y;
  }
};

Biquad highpass_biquad(double fc, double fs, double q) {
  const double w0 = 2.0 * std::numbers::pi * fc / fs;
  const double c = std::cos(w0);
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  return {(1.0 + c) / 2.0 / a0, -(1.0 + c) / a0, (1.0 + c) / 2.0 / a0, -2.0 * c / a0,
          (1.0 - alpha) / a0};
}

}  // namespace

const char* stage_name(Stage s) { return kStageNames[static_cast<std::size_t>(s)]; }

Stage parse_stage(std::string_view name) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i) {
    if (name == kStageNames[i]) return static_cast<Stage>(i);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown stage '" + std::string(name) + "'");
}

void advance_stage(ManifestRecord& r, Stage next) {
  if (static_cast<int>(next) != static_cast<int>(r.stage) + 1) {
    throw Error(ErrorCode::kPrecondition, "record " + r.id + " at stage " +
                                              stage_name(r.stage) + " cannot move to " +
                                              stage_name(next));
  }
  r.stage = next;
}

std::string manifest_line(const ManifestRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["source_path"] = r.source_path;
  j["start_s"] = r.start_s;
  j["end_s"] = r.end_s;
  j["duration_s"] = r.duration_s;
  j["sample_rate"] = r.sample_rate;
  if (r.mos) j["mos"] = *r.mos;
  if (r.speaker_count) j["speaker_count"] = *r.speaker_count;
  if (r.speaker_id) j["speaker_id"] = *r.speaker_id;
  if (r.text) j["text"] = *r.text;
  j["stage"] = stage_name(r.stage);
  return j.dump();
}

ManifestRecord parse_manifest_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("manifest line: ") + e.what());
  }
  ManifestRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.source_path = j.at("source_path").get<std::string>();
    r.start_s = j.at("start_s").get<double>();
    r.end_s = j.at("end_s").get<double>();
    r.duration_s = j.at("duration_s").get<double>();
    r.sample_rate = j.at("sample_rate").get<int>();
    if (j.contains("mos")) r.mos = j["mos"].get<double>();
    if (j.contains("speaker_count")) r.speaker_count = j["speaker_count"].get<int>();
    if (j.contains("speaker_id")) r.speaker_id = j["speaker_id"].get<std::string>();
    if (j.contains("text")) r.text = j["text"].get<std::string>();
    r.stage = parse_stage(j.at("stage").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("manifest record: ") + e.what());
  }
  if (!(r.end_s > r.start_s) || std::abs(r.duration_s - (r.end_s - r.start_s)) > 1e-6) {
    throw Error(ErrorCode::kInvalidArgument, "record " + r.id + " has an inconsistent span");
  }
  if (r.mos && !(*r.mos >= 1.0 && *r.mos <= 5.0)) {
    throw Error(ErrorCode::kInvalidArgument, "record " + r.id + " mos outside [1, 5]");
  }
  return r;
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::vector<ManifestRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_manifest_line(line));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  for (const auto& r : records) out << manifest_line(r) << '\n';
  if (!out) throw Error(ErrorCode::kIoFailure, "write failed: " + path.string());
}

ManifestAppender::ManifestAppender(const std::filesystem::path& path)
    : out_(path, std::ios::binary | std::ios::app) {
  if (!out_) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
}

void ManifestAppender::append(const ManifestRecord& r) {
  const std::string line = manifest_line(r) + '\n';
  std::lock_guard lock(mu_);
  out_ << line;
  out_.flush();
  if (!out_) throw Error(ErrorCode::kIoFailure, "manifest append failed");
}

// --- cleaning ---------------------------------------------------------------

HighpassStage::HighpassStage(double cutoff_hz, int order) : cutoff_hz_(cutoff_hz), order_(order) {
  if (!(cutoff_hz > 0.0) || order < 2 || order % 2 != 0) {
    throw Error(ErrorCode::kInvalidArgument, "highpass needs a positive cutoff and even order");
  }
}

Waveform HighpassStage::apply(const Waveform& w) const {
  if (cutoff_hz_ >= w.sample_rate / 2.0) {
    throw Error(ErrorCode::kInvalidArgument, "highpass cutoff above Nyquist");
  }
  std::vector<Biquad> sections;
  const int n = order_;
  for (int k = 1; k <= n / 2; ++k) {
    const double q = 1.0 / (2.0 * std::sin((2.0 * k - 1.0) * std::numbers::pi / (2.0 * n)));
    sections.push_back(highpass_biquad(cutoff_hz_, w.sample_rate, q));
  }
  Waveform out = w;
  for (auto& s : out.samples) {
    double x = s;
    for (auto& b : sections) x = b.step(x);
    s = static_cast<float>(x);
  }
  return out;
}

Waveform SpectralGateStage::apply(const Waveform& w) const {
  const std::size_t n = w.samples.size();
  if (n < kWindow) return w;
  // Zero padding of one window on each side so the edges get full overlap.
  std::vector<double> padded(n + 2 * kWindow, 0.0);
  for (std::size_t i = 0; i < n; ++i) padded[kWindow + i] = w.samples[i];
  Stft spec = stft(padded, kWindow, kHop);
  const std::size_t frames = spec.frames;
  const std::size_t bins = spec.bins;

  std::vector<double> mag(frames * bins);
  for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::abs(spec.data[i]);

  // Noise floor from frames that lie entirely inside the signal.
  std::vector<std::pair<double, std::size_t>> energy;
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t start = t * kHop;
    if (start < kWindow || start + kWindow > kWindow + n) continue;
    double e = 0.0;
    for (std::size_t k = 0; k < bins; ++k) e += mag[t * bins + k] * mag[t * bins + k];
    energy.emplace_back(e, t);
  }
  if (energy.empty()) return w;
  std::sort(energy.begin(), energy.end());
  const std::size_t quiet = std::max<std::size_t>(1, energy.size() / 5);
  std::vector<double> floor(bins, 0.0);
  for (std::size_t i = 0; i < quiet; ++i) {
    const std::size_t t = energy[i].second;
    for (std::size_t k = 0; k < bins; ++k) floor[k] += mag[t * bins + k];
  }
  for (auto& f : floor) f /= static_cast<double>(quiet);

  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = 0; k < bins; ++k) {
      double sum = 0.0;
      int count = 0;
      for (std::size_t tt = t > 0 ? t - 1 : 0; tt <= std::min(t + 1, frames - 1); ++tt) {
        for (std::size_t kk = k > 0 ? k - 1 : 0; kk <= std::min(k + 1, bins - 1); ++kk) {
          sum += mag[tt * bins + kk];
          ++count;
        }
      }
      if (sum / count < factor_ * floor[k]) spec.data[t * bins + k] = 0.0;
    }
  }
  const auto y = istft(spec, kWindow, kHop, padded.size());
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.samples[i] = static_cast<float>(y[kWindow + i]);
  return out;
}

std::vector<std::shared_ptr<const CleaningStage>> default_cleaning_stages() {
  return {std::make_shared<HighpassStage>(), std::make_shared<SpectralGateStage>()};
}

Waveform apply_cleaning(const Waveform& w,
                        std::span<const std::shared_ptr<const CleaningStage>> stages) {
  Waveform cur = w;
  for (const auto& stage : stages) {
    try {
      Waveform next = stage->apply(cur);
      if (next.sample_rate != cur.sample_rate) {
        throw Error(ErrorCode::kRateMismatch, "stage changed the sample rate");
      }
      const double drift = std::abs(next.duration_s() - cur.duration_s());
      if (drift > static_cast<double>(kHop) / cur.sample_rate) {
        throw Error(ErrorCode::kPrecondition, "stage changed the duration");
      }
      cur = std::move(next);
    } catch (const std::exception& e) {
      throw Error(ErrorCode::kStageFailure, stage->name() + ": " + e.what());
    }
  }
  return cur;
}

// --- scoring and transcription ---------------------------------------------

double SnrProxyScorer::score(const Waveform& w) const {
  if (w.empty()) throw Error(ErrorCode::kEmptyAudio, "cannot score empty audio");
  std::vector<double> rms;
  if (w.samples.size() < kWindow) {
    double e = 0.0;
    for (float s : w.samples) e += static_cast<double>(s) * s;
    rms.push_back(std::sqrt(e / static_cast<double>(w.samples.size())));
  } else {
    rms = rms_energy(w);
  }
  const double p90 = percentile(rms, 0.9);
  const double p10 = percentile(rms, 0.1);
  if (p90 <= 0.0) return 1.0;
  if (p10 <= 0.0) return 5.0;
  const double snr_db = 20.0 * std::log10(p90 / p10);
  return std::clamp(1.0 + 4.0 * snr_db / 40.0, 1.0, 5.0);
}

std::vector<std::string> run_line_protocol(const std::string& command,
                                           std::span<const std::filesystem::path> inputs) {
  const auto list = temp_path(".list");
  {
    std::ofstream out(list);
    for (const auto& p : inputs) out << p.string() << '\n';
    if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + list.string());
  }
  const std::string full = command + " < " + shell_quote(list.string());
  FILE* pipe = ::popen(full.c_str(), "r");
  if (pipe == nullptr) {
    std::filesystem::remove(list);
    throw Error(ErrorCode::kStageFailure, "cannot start '" + command + "'");
  }
  std::string data;
  char buf[4096];
  std::size_t got = 0;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) data.append(buf, got);
  const int status = ::pclose(pipe);
  std::filesystem::remove(list);
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw Error(ErrorCode::kStageFailure, "'" + command + "' exited with status " +
                                              std::to_string(WIFEXITED(status)
                                                                 ? WEXITSTATUS(status)
                                                                 : -1));
  }
  std::vector<std::string> lines;
  std::istringstream ss(data);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.size() != inputs.size()) {
    throw Error(ErrorCode::kStageFailure, "'" + command + "' returned " +
                                              std::to_string(lines.size()) + " lines for " +
                                              std::to_string(inputs.size()) + " inputs");
  }
  return lines;
}

namespace {

std::string run_single(const std::string& command, const Waveform& w) {
  const auto wav = temp_path(".wav");
  save_wav(w, wav);
  std::vector<std::filesystem::path> inputs{wav};
  try {
    auto lines = run_line_protocol(command, inputs);
    std::filesystem::remove(wav);
    return lines.front();
  } catch (...) {
    std::filesystem::remove(wav);
    throw;
  }
}

}  // namespace

double ExternalScorer::score(const Waveform& w) const {
  if (w.empty()) throw Error(ErrorCode::kEmptyAudio, "cannot score empty audio");
  const std::string line = run_single(command_, w);
  double v = 0.0;
  std::size_t used = 0;
  try {
    v = std::stod(line, &used);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kStageFailure, "scorer output '" + line + "' is not a number");
  }
  if (line.find_first_not_of(" \t", used) != std::string::npos || !(v >= 1.0 && v <= 5.0)) {
    throw Error(ErrorCode::kStageFailure, "scorer output '" + line + "' is not a score in [1, 5]");
  }
  return v;
}

std::string audio_fingerprint(const Waveform& w) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint8_t b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  for (int i = 0; i < 4; ++i) mix(static_cast<std::uint8_t>(w.sample_rate >> (8 * i)));
  for (float s : w.samples) {
    const double q = std::nearbyint(static_cast<double>(s) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0));
    mix(static_cast<std::uint8_t>(v & 0xff));
    mix(static_cast<std::uint8_t>((v >> 8) & 0xff));
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf) + ":" + std::to_string(w.samples.size());
}

void LookupTranscriber::add_fingerprint(const Waveform& w, std::string text) {
  by_fingerprint_[audio_fingerprint(w)] = std::move(text);
}

void LookupTranscriber::add_fingerprint(std::string fingerprint, std::string text) {
  by_fingerprint_[std::move(fingerprint)] = std::move(text);
}

void LookupTranscriber::add_span(std::string source_path, double start_s, double end_s,
                                 std::string text) {
  spans_.push_back({canonical_source(source_path), start_s, end_s, std::move(text)});
}

LookupTranscriber LookupTranscriber::load(const std::filesystem::path& truth) {
  std::ifstream in(truth);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + truth.string());
  LookupTranscriber t;
  std::string line;
  const auto base = truth.parent_path();
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      auto text = j.at("text").get<std::string>();
      if (j.contains("fingerprint")) {
        t.add_fingerprint(j["fingerprint"].get<std::string>(), std::move(text));
      } else {
        std::filesystem::path src = j.at("source_path").get<std::string>();
        if (src.is_relative()) src = base / src;
        t.add_span(src.string(), j.at("start_s").get<double>(), j.at("end_s").get<double>(),
                   std::move(text));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kInvalidArgument, std::string("truth file: ") + e.what());
    }
  }
  return t;
}

void LookupTranscriber::save(const std::filesystem::path& truth) const {
  std::ofstream out(truth, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + truth.string());
  for (const auto& [fp, text] : by_fingerprint_) {
    nlohmann::ordered_json j;
    j["fingerprint"] = fp;
    j["text"] = text;
    out << j.dump() << '\n';
  }
  for (const auto& s : spans_) {
    nlohmann::ordered_json j;
    j["source_path"] = s.source;
    j["start_s"] = s.start_s;
    j["end_s"] = s.end_s;
    j["text"] = s.text;
    out << j.dump() << '\n';
  }
}

std::string LookupTranscriber::transcribe(const Waveform& w, const ManifestRecord* context) const {
  if (auto it = by_fingerprint_.find(audio_fingerprint(w)); it != by_fingerprint_.end()) {
    return it->second;
  }
  if (context != nullptr) {
    const std::string src = canonical_source(context->source_path);
    const double len = context->end_s - context->start_s;
    const Span* best = nullptr;
    double best_overlap = 0.0;
    for (const auto& s : spans_) {
      if (s.source != src) continue;
      const double overlap =
          std::min(s.end_s, context->end_s) - std::max(s.start_s, context->start_s);
      if (overlap > best_overlap) {
        best_overlap = overlap;
        best = &s;
      }
    }
    if (best != nullptr && best_overlap >= 0.5 * len) return best->text;
  }
  throw Error(ErrorCode::kTranscriberFailure,
              context ? "no ground truth for " + context->id : "no ground truth for audio");
}

std::string ExternalTranscriber::transcribe(const Waveform& w, const ManifestRecord*) const {
  return run_single(command_, w);
}

// --- pipeline operations ----------------------------------------------------

std::vector<Utterance> chunk_audio(const Waveform& w, const std::string& source_path,
                                   const std::string& id_prefix, double chunk_s) {
  if (!(chunk_s > 0.0)) throw Error(ErrorCode::kInvalidArgument, "chunk_s must be positive");
  if (w.sample_rate <= 0) throw Error(ErrorCode::kInvalidArgument, "invalid sample rate");
  const auto rate = static_cast<double>(w.sample_rate);
  const auto chunk_n = static_cast<std::size_t>(std::llround(chunk_s * rate));
  const std::size_t min_tail = static_cast<std::size_t>(w.sample_rate);
  std::vector<Utterance> out;
  if (chunk_n == 0) return out;
  for (std::size_t start = 0, i = 0; start < w.samples.size(); start += chunk_n, ++i) {
    const std::size_t end = std::min(start + chunk_n, w.samples.size());
    if (end - start < chunk_n && end - start < min_tail) break;
    Utterance u;
    u.audio = slice(w, start, end);
    u.record.id = id_prefix + "_c" + three_digits(i);
    u.record.source_path = source_path;
    u.record.start_s = static_cast<double>(start) / rate;
    u.record.end_s = static_cast<double>(end) / rate;
    u.record.duration_s = u.record.end_s - u.record.start_s;
    u.record.sample_rate = w.sample_rate;
    u.record.stage = Stage::kChunked;
    out.push_back(std::move(u));
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> detect_speech(const Waveform& w) {
  const auto rms = rms_energy(w);
  const std::size_t frames = rms.size();
  std::vector<std::pair<std::size_t, std::size_t>> regions;  // frame ranges
  bool active = false;
  std::size_t above = 0, below = 0, start = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    const double r = rms[t];
    if (!active) {
      above = r > kVadOn ? above + 1 : 0;
      if (above == kVadOnFrames) {
        active = true;
        start = t + 1 - kVadOnFrames;
        below = 0;
      }
    } else {
      below = r < kVadOff ? below + 1 : 0;
      if (below == kVadOffFrames) {
        regions.emplace_back(start, t + 1 - kVadOffFrames);
        active = false;
        above = 0;
      }
    }
  }
  if (active) regions.emplace_back(start, frames);

  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (auto [f0, f1] : regions) {
    const std::size_t b = f0 * kHop;
    const std::size_t e =
        f1 == frames ? w.samples.size() : std::min(w.samples.size(), (f1 - 1) * kHop + kWindow);
    out.emplace_back(b, e);
  }
  return out;
}

namespace {

// Recursively splits [b, e) at its quietest interior frame until every part
// fits in max_n samples.
void split_long(const std::vector<double>& rms, std::size_t b, std::size_t e, std::size_t min_n,
                std::size_t max_n, std::vector<std::pair<std::size_t, std::size_t>>& out) {
  if (e - b <= max_n) {
    out.emplace_back(b, e);
    return;
  }
  // Candidate cut at frame centers; prefer cuts leaving both sides >= min_n.
  auto pick = [&](std::size_t lo_gap) -> std::optional<std::size_t> {
    std::optional<std::size_t> best;
    double best_rms = 0.0;
    for (std::size_t t = 0; t < rms.size(); ++t) {
      const std::size_t cut = t * kHop + kWindow / 2;
      if (t * kHop < b || t * kHop + kWindow > e) continue;
      if (cut < b + lo_gap || cut + lo_gap > e) continue;
      if (!best || rms[t] < best_rms) {
        best = cut;
        best_rms = rms[t];
      }
    }
    return best;
  };
  auto cut = pick(min_n);
  if (!cut) cut = pick(1);
  if (!cut) cut = b + (e - b) / 2;
  split_long(rms, b, *cut, min_n, max_n, out);
  split_long(rms, *cut, e, min_n, max_n, out);
}

}  // namespace

std::vector<Utterance> segment_utterances(const Waveform& w, const ManifestRecord& parent,
                                          double min_s, double max_s) {
  if (w.sample_rate != kCanonicalRate) {
    throw Error(ErrorCode::kPrecondition, "segmentation expects 16 kHz audio");
  }
  if (!(min_s >= 0.0) || !(max_s > 0.0) || max_s < min_s) {
    throw Error(ErrorCode::kInvalidArgument, "invalid segment length bounds");
  }
  const auto rate = static_cast<double>(w.sample_rate);
  const auto min_n = static_cast<std::size_t>(std::llround(min_s * rate));
  const auto max_n = static_cast<std::size_t>(std::llround(max_s * rate));
  const auto rms = rms_energy(w);

  std::vector<std::pair<std::size_t, std::size_t>> parts;
  for (auto [b, e] : detect_speech(w)) split_long(rms, b, e, min_n, max_n, parts);

  std::vector<Utterance> out;
  std::size_t index = 0;
  for (auto [b, e] : parts) {
    if (e - b < min_n) continue;
    Utterance u;
    u.audio = slice(w, b, e);
    u.record = parent;
    u.record.id = parent.id + "_s" + three_digits(index++);
    u.record.start_s = parent.start_s + static_cast<double>(b) / rate;
    u.record.end_s = parent.start_s + static_cast<double>(e) / rate;
    u.record.duration_s = u.record.end_s - u.record.start_s;
    u.record.sample_rate = w.sample_rate;
    advance_stage(u.record, Stage::kSegmented);
    out.push_back(std::move(u));
  }
  return out;
}

double score_quality(const Waveform& w, const QualityScorer& scorer) {
  if (w.empty()) throw Error(ErrorCode::kEmptyAudio, "cannot score empty audio");
  const double s = scorer.score(w);
  if (!(s >= 1.0 && s <= 5.0)) {
    throw Error(ErrorCode::kStageFailure, "scorer returned " + std::to_string(s));
  }
  return s;
}

QualityPartition filter_quality(std::span<const ManifestRecord> records, double threshold) {
  for (const auto& r : records) {
    if (!r.mos) throw Error(ErrorCode::kMissingScore, "record " + r.id + " has no mos");
  }
  QualityPartition p;
  for (auto r : records) {
    if (r.stage == Stage::kSegmented) advance_stage(r, Stage::kScored);
    (*r.mos > threshold ? p.kept : p.dropped).push_back(std::move(r));
  }
  return p;
}

SpeakerCheck speaker_spread(const Waveform& w) {
  const auto win = static_cast<std::size_t>(2 * w.sample_rate);
  const auto hop = static_cast<std::size_t>(w.sample_rate);
  if (w.samples.size() < 2 * win) {
    throw Error(ErrorCode::kTooShort, "speaker check needs at least 4 s of audio");
  }
  std::vector<SpeakerEmbedding> emb;
  for (std::size_t b = 0; b + win <= w.samples.size(); b += hop) {
    emb.push_back(speaker_embedding(slice(w, b, b + win)));
  }
  SpeakerCheck c;
  c.windows = emb.size();
  for (std::size_t i = 0; i < emb.size(); ++i) {
    for (std::size_t j = i + 1; j < emb.size(); ++j) {
      c.max_distance = std::max(c.max_distance, 1.0 - cosine_similarity(emb[i], emb[j]));
    }
  }
  return c;
}

std::optional<ManifestRecord> filter_single_speaker(const Waveform& w, const ManifestRecord& r,
                                                    double max_distance) {
  const auto check = speaker_spread(w);
  if (check.max_distance > max_distance) return std::nullopt;
  ManifestRecord out = r;
  advance_stage(out, Stage::kSpeakerFiltered);
  out.speaker_count = 1;
  if (!out.speaker_id) {
    out.speaker_id = std::filesystem::path(r.source_path).stem().string() + "_spk0";
  }
  return out;
}

ManifestRecord transcribe(const Waveform& w, const Transcriber& t, const ManifestRecord& r) {
  if (r.stage < Stage::kSpeakerFiltered) {
    throw Error(ErrorCode::kPrecondition, "record " + r.id + " has not passed the speaker filter");
  }
  ManifestRecord out = r;
  out.text = t.transcribe(w, &r);
  out.stage = Stage::kTranscribed;
  return out;
}

std::string pretrain_line(const std::string& text, std::span<const std::uint32_t> audio) {
  for (auto id : audio) {
    if (id >= kCodebookSize) {
      throw Error(ErrorCode::kCodecMismatch, "audio token " + std::to_string(id) + " >= 1024");
    }
  }
  return text + " " + audio_literal_string(audio);
}

namespace {

const std::string& require_text(const Utterance& u) {
  if (!u.record.text) {
    throw Error(ErrorCode::kPrecondition, "record " + u.record.id + " has no transcript");
  }
  return *u.record.text;
}

void check_codec(const Codebook& cb) {
  if (cb.size() > kCodebookSize) {
    throw Error(ErrorCode::kCodecMismatch,
                "codebook of " + std::to_string(cb.size()) + " entries exceeds 1024");
  }
}

}  // namespace

std::size_t build_pretrain_corpus(std::span<const Utterance> utterances, const Codebook& cb,
                                  const std::filesystem::path& out) {
  check_codec(cb);
  std::ostringstream buf;
  for (const auto& u : utterances) {
    buf << pretrain_line(require_text(u), encode(u.audio, cb)) << '\n';
  }
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  f << buf.str();
  if (!f) throw Error(ErrorCode::kIoFailure, "cannot write " + out.string());
  return utterances.size();
}

std::size_t build_sft_corpus(std::span<const Utterance> utterances, const Codebook& cb,
                             const std::filesystem::path& out) {
  check_codec(cb);
  std::set<std::string> speakers;
  for (const auto& u : utterances) speakers.insert(u.record.speaker_id.value_or(""));
  if (speakers.size() > 1) {
    throw Error(ErrorCode::kMixedSpeakers,
                std::to_string(speakers.size()) + " speakers in one fine-tuning corpus");
  }
  std::ostringstream buf;
  for (const auto& u : utterances) {
    SftRecord rec;
    rec.instruction = require_text(u);
    rec.output = audio_literal_string(encode(u.audio, cb));
    buf << sft_record_json(rec) << '\n';
  }
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  f << buf.str();
  if (!f) throw Error(ErrorCode::kIoFailure, "cannot write " + out.string());
  return utterances.size();
}

}  // namespace podforge
