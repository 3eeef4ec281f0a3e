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

#include "podforge/eval.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "podforge/error.hpp"
#include "podforge/parallel.hpp"
#include "podforge/pipeline.hpp"

namespace podforge {

std::vector<std::string> normalize_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else if (!std::ispunct(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::size_t edit_distance(std::span<const std::string> ref, std::span<const std::string> hyp) {
  std::vector<std::size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

double wer(std::string_view reference, std::string_view hypothesis) {
  const auto r = normalize_words(reference);
  const auto h = normalize_words(hypothesis);
  return static_cast<double>(edit_distance(r, h)) /
         static_cast<double>(std::max<std::size_t>(1, r.size()));
}

SpeakerEmbedding speaker_embedding(const Waveform& w) {
  if (w.samples.size() < kWindow) {
    throw Error(ErrorCode::kTooShort, "speaker embedding needs at least 1024 samples");
  }
  const Waveform& canon = w.sample_rate == kCanonicalRate ? w : resample(w, kCanonicalRate);
  const auto mfcc = extract_features(canon, FeatureKind::kMfcc);
  SpeakerEmbedding e;
  if (mfcc.frames == 0) {
    throw Error(ErrorCode::kTooShort, "speaker embedding needs at least one frame");
  }
  const auto n = static_cast<double>(mfcc.frames);
  for (std::size_t d = 0; d < kMfccDims; ++d) {
    double mean = 0.0;
    for (std::size_t t = 0; t < mfcc.frames; ++t) mean += mfcc.row(t)[d];
    mean /= n;
    double var = 0.0;
    for (std::size_t t = 0; t < mfcc.frames; ++t) {
      const double dv = mfcc.row(t)[d] - mean;
      var += dv * dv;
    }
    e.values[d] = mean;
    e.values[kMfccDims + d] = std::sqrt(var / n);
  }
  return e;
}

double cosine_similarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < kEmbeddingDims; ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double sim(const Waveform& a, const Waveform& b) {
  return cosine_similarity(speaker_embedding(a), speaker_embedding(b));
}

SpeedMeasurement speed_ratio(double t_inf, double t_syn) {
  if (!(t_syn > 0.0)) throw Error(ErrorCode::kZeroDuration, "synthesized duration must be > 0");
  if (!(t_inf >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "inference time must be >= 0");
  return {t_inf, t_syn, t_inf / t_syn};
}

// --- report -----------------------------------------------------------------

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  auto& m = j["metadata"];
  m["timestamp"] = r.metadata.timestamp;
  m["config_digest"] = r.metadata.config_digest;
  m["seed"] = r.metadata.seed;
  m["mode"] = r.metadata.mode;
  m["records_total"] = r.metadata.records_total;
  m["records_failed"] = r.metadata.records_failed;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    nlohmann::ordered_json o;
    o["model_name"] = row.model_name;
    o["dataset_name"] = row.dataset_name;
    o["wer_pct"] = row.wer_pct;
    o["mos"] = row.mos;
    o["sim"] = row.sim;
    o["r"] = row.r;
    j["rows"].push_back(std::move(o));
  }
  j["records"] = nlohmann::ordered_json::array();
  for (const auto& rec : r.records) {
    nlohmann::ordered_json o;
    o["id"] = rec.id;
    o["error"] = rec.error ? nlohmann::ordered_json(*rec.error) : nlohmann::ordered_json();
    o["hypothesis"] = rec.hypothesis;
    o["wer"] = rec.wer;
    o["sim"] = rec.sim;
    o["mos"] = rec.mos;
    o["t_inf"] = rec.t_inf;
    o["t_syn"] = rec.t_syn;
    o["r"] = rec.r;
    j["records"].push_back(std::move(o));
  }
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    const auto& m = j.at("metadata");
    r.metadata.timestamp = m.at("timestamp").get<std::string>();
    r.metadata.config_digest = m.at("config_digest").get<std::string>();
    r.metadata.seed = m.at("seed").get<std::uint64_t>();
    r.metadata.mode = m.at("mode").get<std::string>();
    r.metadata.records_total = m.at("records_total").get<std::size_t>();
    r.metadata.records_failed = m.at("records_failed").get<std::size_t>();
    for (const auto& o : j.at("rows")) {
      r.rows.push_back({o.at("model_name").get<std::string>(),
                        o.at("dataset_name").get<std::string>(), o.at("wer_pct").get<double>(),
                        o.at("mos").get<double>(), o.at("sim").get<double>(),
                        o.at("r").get<double>()});
    }
    for (const auto& o : j.at("records")) {
      RecordResult rec;
      rec.id = o.at("id").get<std::string>();
      if (!o.at("error").is_null()) rec.error = o["error"].get<std::string>();
      rec.hypothesis = o.at("hypothesis").get<std::string>();
      rec.wer = o.at("wer").get<double>();
      rec.sim = o.at("sim").get<double>();
      rec.mos = o.at("mos").get<double>();
      rec.t_inf = o.at("t_inf").get<double>();
      rec.t_syn = o.at("t_syn").get<double>();
      rec.r = o.at("r").get<double>();
      r.records.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("eval report: ") + e.what());
  }
  return r;
}

std::string report_json_string(const EvalReport& r) { return report_to_json(r).dump(2) + "\n"; }

void save_report(const EvalReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << report_json_string(r);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
}

EvalReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  try {
    return report_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("eval report: ") + e.what());
  }
}

EvalReport without_timing(EvalReport r) {
  r.metadata.timestamp.clear();
  for (auto& row : r.rows) row.r = 0.0;
  for (auto& rec : r.records) {
    rec.t_inf = 0.0;
    rec.r = 0.0;
  }
  return r;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string render(const std::vector<std::string>& header,
                   const std::vector<std::vector<std::string>>& body) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : body) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c > 0) out << " | ";
      // First column left-aligned, numbers right-aligned.
      const std::string pad(width[c] - cells[c].size(), ' ');
      out << (c == 0 ? cells[c] + pad : pad + cells[c]);
    }
    out << '\n';
  };
  line(header);
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c > 0) out << "-+-";
    out << std::string(width[c], '-');
  }
  out << '\n';
  for (const auto& row : body) line(row);
  return out.str();
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string render_table(const EvalReport& r) {
  std::vector<std::vector<std::string>> body;
  for (const auto& row : r.rows) {
    body.push_back({row.model_name, row.dataset_name, fixed(row.wer_pct, 2), fixed(row.mos, 2),
                    fixed(row.sim, 3)});
  }
  return render({"Model", "Dataset", "WER(%)", "MOS", "SIM"}, body);
}

std::string render_speed_table(const EvalReport& r) {
  std::vector<std::vector<std::string>> body;
  for (const auto& row : r.rows) body.push_back({row.model_name, fixed(row.r, 2)});
  return render({"Model", "r"}, body);
}

// --- evaluation -------------------------------------------------------------

std::vector<EvalItem> load_eval_dataset(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + manifest.string());
  const auto dir = manifest.parent_path();
  std::vector<EvalItem> items;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const ManifestRecord rec = parse_manifest_line(line);
    if (!rec.text) throw Error(ErrorCode::kInvalidArgument, "record " + rec.id + " has no text");
    const auto j = nlohmann::json::parse(line);
    EvalItem item;
    item.id = rec.id;
    item.text = *rec.text;
    item.reference = load_wav(dir / "audio" / (rec.id + ".wav"));
    if (j.contains("ref_text")) item.ref_text = j["ref_text"].get<std::string>();
    if (j.contains("ref_audio_path")) {
      std::filesystem::path p = j["ref_audio_path"].get<std::string>();
      item.ref_audio = load_wav(p.is_relative() ? dir / p : p);
    }
    items.push_back(std::move(item));
  }
  return items;
}

EvalReport run_eval(std::span<const EvalItem> dataset, const SequenceModel& model,
                    const MergedVocab& vocab, const Codebook& cb, const Transcriber& transcriber,
                    const QualityScorer& scorer, const EvalOptions& options) {
  EvalReport report;
  report.metadata.timestamp = options.timestamp.empty() ? utc_now() : options.timestamp;
  report.metadata.config_digest = options.config_digest;
  report.metadata.seed = options.seed;
  report.metadata.mode = mode_name(options.mode);
  report.metadata.records_total = dataset.size();
  report.records.resize(dataset.size());

  SynthesisOptions synth;
  synth.workers = 1;
  synth.split_sentences = false;
  synth.temperature = options.temperature;
  synth.sft_template = options.sft_template;

  parallel_for(dataset.size(), std::max<std::size_t>(1, options.workers), [&](std::size_t i) {
    const EvalItem& item = dataset[i];
    RecordResult& out = report.records[i];
    out.id = item.id;
    try {
      SynthesisRequest req;
      req.target_text = item.text;
      req.mode = options.mode;
      req.seed = options.seed + i;
      req.max_seconds_per_sentence = options.max_seconds_per_sentence;
      const Waveform* speaker_ref = &item.reference;
      if (options.mode == SynthesisMode::kZeroShot) {
        if (!item.ref_text || !item.ref_audio) {
          throw Error(ErrorCode::kPrecondition, "zero-shot record without a prompt pair");
        }
        req.ref_text = *item.ref_text;
        req.ref_audio = *item.ref_audio;
        speaker_ref = &*item.ref_audio;
      }
      const auto result = synthesize(req, model, vocab, cb, synth);
      out.hypothesis = transcriber.transcribe(result.audio, nullptr);
      out.wer = wer(item.text, out.hypothesis);
      out.sim = sim(result.audio, *speaker_ref);
      out.mos = score_quality(result.audio, scorer);
      const auto speed = speed_ratio(result.t_inf, result.t_syn);
      out.t_inf = speed.t_inf;
      out.t_syn = speed.t_syn;
      out.r = speed.r;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  });

  std::size_t ok = 0;
  EvalRow row{options.model_name, options.dataset_name, 0.0, 0.0, 0.0, 0.0};
  for (const auto& rec : report.records) {
    if (rec.error) {
      ++report.metadata.records_failed;
      continue;
    }
    ++ok;
    row.wer_pct += rec.wer;
    row.mos += rec.mos;
    row.sim += rec.sim;
    row.r += rec.r;
  }
  if (ok > 0) {
    const auto n = static_cast<double>(ok);
    row.wer_pct = 100.0 * row.wer_pct / n;
    row.mos /= n;
    row.sim /= n;
    row.r /= n;
    report.rows.push_back(row);
  }
  return report;
}

EvalReport run_eval(const std::filesystem::path& manifest, const SequenceModel& model,
                    const MergedVocab& vocab, const Codebook& cb, const Transcriber& transcriber,
                    const QualityScorer& scorer, const EvalOptions& options) {
  const auto items = load_eval_dataset(manifest);
  return run_eval(items, model, vocab, cb, transcriber, scorer, options);
}

}  // namespace podforge
