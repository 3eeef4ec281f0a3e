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

#include "podforge/stages.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "podforge/error.hpp"
#include "podforge/parallel.hpp"

namespace podforge {
namespace {

namespace fs = std::filesystem;

fs::path audio_dir(const fs::path& manifest) { return manifest.parent_path() / "audio"; }

void prepare_output(const fs::path& manifest) {
  std::error_code ec;
  fs::create_directories(audio_dir(manifest), ec);
  if (ec) throw Error(ErrorCode::kIoFailure, "cannot create " + audio_dir(manifest).string());
}

void copy_audio(const fs::path& from_manifest, const fs::path& to_manifest, const std::string& id) {
  const auto src = audio_path(from_manifest, id);
  const auto dst = audio_path(to_manifest, id);
  std::error_code ec;
  if (fs::exists(dst) && fs::equivalent(src, dst, ec)) return;
  fs::copy_file(src, dst, fs::copy_options::overwrite_existing, ec);
  if (ec) throw Error(ErrorCode::kIoFailure, "cannot copy " + src.string() + ": " + ec.message());
}

Waveform canonical(Waveform w) {
  return w.sample_rate == kCanonicalRate ? w : resample(w, kCanonicalRate);
}

std::vector<fs::path> expand_inputs(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (e.is_regular_file() && ext == ".wav") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(in)) {
      files.push_back(in);
    } else {
      throw Error(ErrorCode::kIoFailure, "no such input " + in.string());
    }
  }
  return files;
}

// Per-record map stage with order-preserving output. `fn` returns the
// records to keep for input i (possibly none).
template <typename Fn>
std::vector<std::vector<ManifestRecord>> map_records(std::size_t n, std::size_t workers, Fn&& fn) {
  std::vector<std::vector<ManifestRecord>> slots(n);
  parallel_for(n, workers, [&](std::size_t i) { slots[i] = fn(i); });
  return slots;
}

StageSummary finish(const fs::path& out, std::size_t input,
                    const std::vector<std::vector<ManifestRecord>>& slots) {
  StageSummary s;
  s.input = input;
  std::ofstream truncate(out, std::ios::binary | std::ios::trunc);
  if (!truncate) throw Error(ErrorCode::kIoFailure, "cannot write " + out.string());
  truncate.close();
  ManifestAppender appender(out);
  std::set<std::string> ids;
  for (const auto& slot : slots) {
    for (const auto& r : slot) {
      if (!ids.insert(r.id).second) {
        throw Error(ErrorCode::kInvalidArgument, "duplicate record id " + r.id);
      }
      appender.append(r);
      ++s.output;
    }
  }
  s.dropped = s.input >= s.output ? s.input - s.output : 0;
  return s;
}

void write_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t& pos) {
  if (pos + 4 > b.size()) throw Error(ErrorCode::kMalformedContainer, "model bundle truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

constexpr char kBundleMagic[8] = {'P', 'F', 'B', 'U', 'N', 'D', 'L', 'E'};
constexpr std::uint32_t kBundleVersion = 1;

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

fs::path audio_path(const fs::path& manifest, const std::string& id) {
  return audio_dir(manifest) / (id + ".wav");
}

std::vector<Utterance> load_utterances(const fs::path& manifest) {
  std::vector<Utterance> out;
  for (auto& r : read_manifest(manifest)) {
    Utterance u;
    u.audio = load_wav(audio_path(manifest, r.id));
    u.record = std::move(r);
    out.push_back(std::move(u));
  }
  return out;
}

StageSummary stage_ingest(const std::vector<fs::path>& inputs, const fs::path& out,
                          const AppConfig& cfg, const std::string& speaker) {
  const auto files = expand_inputs(inputs);
  prepare_output(out);
  auto slots = map_records(files.size(), cfg.workers, [&](std::size_t i) {
    const Waveform w = canonical(load_wav(files[i]));
    std::vector<ManifestRecord> recs;
    for (auto& u : chunk_audio(w, files[i].string(), files[i].stem().string(), cfg.chunk_s)) {
      if (!speaker.empty()) u.record.speaker_id = speaker;
      save_wav(u.audio, audio_path(out, u.record.id));
      recs.push_back(std::move(u.record));
    }
    return recs;
  });
  auto s = finish(out, files.size(), slots);
  s.dropped = 0;
  s.notes.push_back(std::to_string(files.size()) + " source file(s)");
  return s;
}

StageSummary stage_clean(const fs::path& manifest, const fs::path& out, const AppConfig& cfg) {
  const auto records = read_manifest(manifest);
  prepare_output(out);
  const auto stages = default_cleaning_stages();
  auto slots = map_records(records.size(), cfg.workers, [&](std::size_t i) {
    ManifestRecord r = records[i];
    const Waveform w = apply_cleaning(load_wav(audio_path(manifest, r.id)), stages);
    advance_stage(r, Stage::kCleaned);
    save_wav(w, audio_path(out, r.id));
    return std::vector<ManifestRecord>{r};
  });
  return finish(out, records.size(), slots);
}

StageSummary stage_segment(const fs::path& manifest, const fs::path& out, const AppConfig& cfg) {
  const auto records = read_manifest(manifest);
  prepare_output(out);
  auto slots = map_records(records.size(), cfg.workers, [&](std::size_t i) {
    const Waveform w = canonical(load_wav(audio_path(manifest, records[i].id)));
    std::vector<ManifestRecord> recs;
    for (auto& u : segment_utterances(w, records[i], cfg.min_segment_s, cfg.max_segment_s)) {
      save_wav(u.audio, audio_path(out, u.record.id));
      recs.push_back(std::move(u.record));
    }
    return recs;
  });
  auto s = finish(out, records.size(), slots);
  s.dropped = 0;
  return s;
}

StageSummary stage_score(const fs::path& manifest, const fs::path& out, const AppConfig& cfg,
                         double threshold) {
  auto records = read_manifest(manifest);
  prepare_output(out);
  const auto scorer = make_scorer(cfg);
  parallel_for(records.size(), cfg.workers, [&](std::size_t i) {
    records[i].mos = score_quality(load_wav(audio_path(manifest, records[i].id)), *scorer);
  });
  auto part = filter_quality(records, threshold);
  for (const auto& r : part.kept) copy_audio(manifest, out, r.id);
  write_manifest(out.parent_path() / "dropped.jsonl", part.dropped);
  StageSummary s = finish(out, records.size(), {part.kept});
  std::ostringstream note;
  note << "kept " << part.kept.size() << " of " << records.size() << " above mos " << threshold;
  s.notes.push_back(note.str());
  return s;
}

StageSummary stage_filter_speaker(const fs::path& manifest, const fs::path& out,
                                  const AppConfig& cfg) {
  const auto records = read_manifest(manifest);
  prepare_output(out);
  std::vector<std::string> notes(records.size());
  auto slots = map_records(records.size(), cfg.workers, [&](std::size_t i) {
    const Waveform w = load_wav(audio_path(manifest, records[i].id));
    std::optional<ManifestRecord> kept;
    try {
      kept = filter_single_speaker(w, records[i], cfg.speaker_max_distance);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kTooShort) throw;
      notes[i] = records[i].id + ": " + e.what();
      return std::vector<ManifestRecord>{};
    }
    if (!kept) return std::vector<ManifestRecord>{};
    copy_audio(manifest, out, kept->id);
    return std::vector<ManifestRecord>{*kept};
  });
  auto s = finish(out, records.size(), slots);
  for (auto& n : notes) {
    if (!n.empty()) s.notes.push_back(std::move(n));
  }
  return s;
}

StageSummary stage_transcribe(const fs::path& manifest, const fs::path& out, const AppConfig& cfg) {
  const auto records = read_manifest(manifest);
  prepare_output(out);
  const auto transcriber = make_transcriber(cfg);
  auto slots = map_records(records.size(), cfg.workers, [&](std::size_t i) {
    const Waveform w = load_wav(audio_path(manifest, records[i].id));
    ManifestRecord r = transcribe(w, *transcriber, records[i]);
    copy_audio(manifest, out, r.id);
    return std::vector<ManifestRecord>{r};
  });
  return finish(out, records.size(), slots);
}

StageSummary stage_format_pretrain(const fs::path& manifest, const fs::path& codec,
                                   const fs::path& out) {
  const auto utts = load_utterances(manifest);
  const auto cb = Codebook::load(codec);
  StageSummary s;
  s.input = utts.size();
  s.output = build_pretrain_corpus(utts, cb, out);
  return s;
}

StageSummary stage_format_sft(const fs::path& manifest, const fs::path& codec, const fs::path& out) {
  const auto utts = load_utterances(manifest);
  const auto cb = Codebook::load(codec);
  StageSummary s;
  s.input = utts.size();
  s.output = build_sft_corpus(utts, cb, out);
  return s;
}

StageSummary stage_train_codec(const fs::path& manifest, const fs::path& out, const AppConfig& cfg) {
  const auto records = read_manifest(manifest);
  std::vector<Waveform> corpus;
  for (const auto& r : records) {
    if (r.mos && *r.mos > cfg.mos_threshold_decoder) {
      corpus.push_back(canonical(load_wav(audio_path(manifest, r.id))));
    }
  }
  if (corpus.empty()) {
    std::ostringstream m;
    m << "no record in " << manifest.string() << " has mos above " << cfg.mos_threshold_decoder;
    throw Error(ErrorCode::kInsufficientData, m.str());
  }
  KMeansOptions opts;
  opts.k = cfg.codebook_size;
  opts.seed = cfg.seed;
  opts.max_iterations = cfg.kmeans_iterations;
  opts.workers = cfg.workers;
  KMeansReport report;
  const Codebook cb = train_codebook(corpus, opts, &report);
  cb.save(out);
  StageSummary s;
  s.input = records.size();
  s.output = corpus.size();
  s.dropped = records.size() - corpus.size();
  std::ostringstream note;
  note << "k=" << cb.size() << " iterations=" << report.iterations
       << " objective=" << (report.objective.empty() ? 0.0 : report.objective.back())
       << " reseeded=" << report.reseeded;
  s.notes.push_back(note.str());
  return s;
}

std::vector<std::uint8_t> ModelBundle::serialize() const {
  std::vector<std::uint8_t> out(kBundleMagic, kBundleMagic + 8);
  write_u32(out, kBundleVersion);
  const auto& tokens = vocab.text_tokens();
  write_u32(out, static_cast<std::uint32_t>(tokens.size()));
  for (const auto& t : tokens) {
    write_u32(out, static_cast<std::uint32_t>(t.size()));
    out.insert(out.end(), t.begin(), t.end());
  }
  const auto m = model.serialize();
  out.insert(out.end(), m.begin(), m.end());
  return out;
}

ModelBundle ModelBundle::deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kBundleMagic, 8) != 0) {
    throw Error(ErrorCode::kMalformedContainer, "not a model bundle");
  }
  std::size_t pos = 8;
  if (read_u32(bytes, pos) != kBundleVersion) {
    throw Error(ErrorCode::kMalformedContainer, "unsupported model bundle version");
  }
  const std::uint32_t n = read_u32(bytes, pos);
  std::vector<std::string> tokens;
  tokens.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t len = read_u32(bytes, pos);
    if (pos + len > bytes.size()) throw Error(ErrorCode::kMalformedContainer, "model bundle truncated");
    tokens.emplace_back(reinterpret_cast<const char*>(bytes.data() + pos), len);
    pos += len;
  }
  if (tokens.empty() || tokens.front() != kUnkLiteral) {
    throw Error(ErrorCode::kMalformedContainer, "bundle vocabulary must start with <unk>");
  }
  auto vocab = MergedVocab::from_text_tokens(std::move(tokens));
  auto model = NGramModel::deserialize(bytes.subspan(pos));
  if (model.vocab_size() != vocab.size() || model.end_token() != vocab.end_token()) {
    throw Error(ErrorCode::kMalformedContainer, "model and vocabulary disagree");
  }
  return {std::move(vocab), std::move(model)};
}

void ModelBundle::save(const fs::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
}

ModelBundle ModelBundle::load(const fs::path& path) { return deserialize(read_file(path)); }

TrainingCorpus read_training_corpus(const std::optional<fs::path>& pretrain,
                                    const std::optional<fs::path>& sft) {
  TrainingCorpus c;
  std::string line;
  if (pretrain) {
    std::ifstream in(*pretrain);
    if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + pretrain->string());
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto p = parse_pretrain_line(line);
      c.pretrain_texts.push_back(std::move(p.text));
      c.pretrain_audio.push_back(std::move(p.audio));
    }
  }
  if (sft) {
    std::ifstream in(*sft);
    if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + sft->string());
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto r = parse_sft_record(line);
      c.sft_instructions.push_back(std::move(r.instruction));
      c.sft_audio.push_back(parse_audio_literal_run(r.output));
    }
  }
  return c;
}

ModelBundle train_bundle(const TrainingCorpus& corpus, const AppConfig& cfg) {
  std::vector<std::string> texts = corpus.pretrain_texts;
  std::vector<std::string> instructions;
  for (const auto& instr : corpus.sft_instructions) {
    instructions.push_back(normalize_text(instr));
    texts.push_back(render_sft_text(instructions.back(), cfg.sft_template));
  }
  if (texts.empty()) throw Error(ErrorCode::kEmptyCorpus, "no training lines");
  MergedVocab vocab = MergedVocab::build(texts);
  std::vector<TokenSequence> seqs;
  for (std::size_t i = 0; i < corpus.pretrain_texts.size(); ++i) {
    seqs.push_back(assemble_pretrain_line(vocab, corpus.pretrain_texts[i], corpus.pretrain_audio[i]));
  }
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    TokenSequence s = render_sft_prompt(vocab, instructions[i], cfg.sft_template);
    const auto audio = map_audio(vocab, corpus.sft_audio[i]);
    s.insert(s.end(), audio.begin(), audio.end());
    s.push_back(vocab.end_token());
    seqs.push_back(std::move(s));
  }
  NGramOptions opts;
  opts.order = cfg.ngram_order;
  opts.alpha = cfg.backoff_alpha;
  auto model = NGramModel::train(seqs, vocab.size(), vocab.end_token(), opts);
  return {std::move(vocab), std::move(model)};
}

StageSummary stage_train_lm(const std::optional<fs::path>& pretrain, const std::optional<fs::path>& sft,
                            const fs::path& out, const AppConfig& cfg) {
  if (!pretrain && !sft) throw Error(ErrorCode::kInvalidArgument, "train-lm needs a corpus file");
  const auto corpus = read_training_corpus(pretrain, sft);
  const auto bundle = train_bundle(corpus, cfg);
  bundle.save(out);
  StageSummary s;
  s.input = corpus.pretrain_texts.size() + corpus.sft_instructions.size();
  s.output = 1;
  s.notes.push_back("vocabulary " + std::to_string(bundle.vocab.size()) + " ids, " +
                    bundle.model.name());
  return s;
}

SynthesisOptions synthesis_options(const AppConfig& cfg) {
  SynthesisOptions o;
  o.workers = cfg.workers;
  o.temperature = cfg.temperature;
  o.sft_template = cfg.sft_template;
  return o;
}

std::unique_ptr<SequenceModel> make_model(const ModelBundle& bundle, const AppConfig& cfg) {
  if (!cfg.backend.empty()) {
    BackendOptions b;
    b.timeout = std::chrono::milliseconds(cfg.backend_timeout_ms);
    b.pool_size = cfg.workers;
    return std::make_unique<ExternalModel>(cfg.backend, bundle.vocab.size(),
                                           bundle.vocab.end_token(), b);
  }
  return std::make_unique<NGramModel>(bundle.model);
}

SynthesisResult stage_synth(const SynthRequestFiles& req, const AppConfig& cfg) {
  const auto bundle = ModelBundle::load(req.model);
  const auto cb = Codebook::load(req.codec);
  const auto model = make_model(bundle, cfg);
  SynthesisRequest r;
  r.target_text = req.text;
  r.mode = req.mode;
  r.seed = cfg.seed;
  r.max_seconds_per_sentence = static_cast<double>(cfg.generation_cap_tokens) / kTokenRate;
  if (req.mode == SynthesisMode::kZeroShot) {
    if (!req.ref_audio) throw Error(ErrorCode::kPrecondition, "zero-shot needs reference audio");
    r.ref_text = req.ref_text;
    r.ref_audio = load_wav(*req.ref_audio);
  }
  auto result = synthesize(r, *model, bundle.vocab, cb, synthesis_options(cfg));
  save_wav(result.audio, req.out);
  return result;
}

std::unique_ptr<QualityScorer> make_scorer(const AppConfig& cfg) {
  if (!cfg.scorer_command.empty()) return std::make_unique<ExternalScorer>(cfg.scorer_command);
  return std::make_unique<SnrProxyScorer>();
}

std::unique_ptr<Transcriber> make_transcriber(const AppConfig& cfg) {
  if (!cfg.transcriber_command.empty()) {
    return std::make_unique<ExternalTranscriber>(cfg.transcriber_command);
  }
  if (cfg.truth_path.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "no transcriber: set transcriber_command or truth_path");
  }
  return std::make_unique<LookupTranscriber>(LookupTranscriber::load(cfg.truth_path));
}

std::unique_ptr<Transcriber> eval_transcriber(std::span<const EvalItem> items, const Codebook& cb,
                                              const AppConfig& cfg) {
  if (!cfg.transcriber_command.empty()) {
    return std::make_unique<ExternalTranscriber>(cfg.transcriber_command);
  }
  auto t = std::make_unique<LookupTranscriber>(
      cfg.truth_path.empty() ? LookupTranscriber{} : LookupTranscriber::load(cfg.truth_path));
  for (const auto& item : items) {
    const Waveform ref = canonical(item.reference);
    t->add_fingerprint(ref, item.text);
    t->add_fingerprint(decode(encode(ref, cb), cb), item.text);
  }
  return t;
}

EvalReport stage_eval(const EvalFiles& files, const AppConfig& cfg) {
  const auto items = load_eval_dataset(files.manifest);
  const auto bundle = ModelBundle::load(files.model);
  const auto cb = Codebook::load(files.codec);
  const auto model = make_model(bundle, cfg);
  const auto transcriber = eval_transcriber(items, cb, cfg);
  const auto scorer = make_scorer(cfg);
  EvalOptions o;
  o.mode = files.mode;
  o.seed = cfg.seed;
  o.model_name = files.model_name;
  o.dataset_name = files.dataset_name;
  if (o.dataset_name.empty()) {
    o.dataset_name = fs::absolute(files.manifest).parent_path().filename().string();
  }
  o.config_digest = cfg.digest();
  o.temperature = cfg.temperature;
  o.sft_template = cfg.sft_template;
  o.max_seconds_per_sentence = static_cast<double>(cfg.generation_cap_tokens) / kTokenRate;
  auto report = run_eval(items, *model, bundle.vocab, cb, *transcriber, *scorer, o);
  save_report(report, files.out);
  return report;
}

StageSummary stage_pipeline(const std::vector<fs::path>& inputs, const fs::path& work,
                            const AppConfig& cfg, const std::string& speaker) {
  fs::create_directories(work);
  const auto m1 = work / "chunked" / "manifest.jsonl";
  const auto m2 = work / "cleaned" / "manifest.jsonl";
  const auto m3 = work / "segmented" / "manifest.jsonl";
  const auto m4 = work / "scored" / "manifest.jsonl";
  const auto m5 = work / "speaker_filtered" / "manifest.jsonl";
  const auto m6 = work / "transcribed" / "manifest.jsonl";
  StageSummary total;
  total.input = stage_ingest(inputs, m1, cfg, speaker).input;
  stage_clean(m1, m2, cfg);
  stage_segment(m2, m3, cfg);
  const auto scored = stage_score(m3, m4, cfg, cfg.mos_threshold_pipeline);
  total.notes = scored.notes;
  const auto filtered = stage_filter_speaker(m4, m5, cfg);
  total.dropped = scored.dropped + filtered.dropped;
  total.notes.insert(total.notes.end(), filtered.notes.begin(), filtered.notes.end());
  const auto transcribed = stage_transcribe(m5, m6, cfg);
  stage_train_codec(m6, work / "codec.bin", cfg);
  stage_format_pretrain(m6, work / "codec.bin", work / "pretrain.txt");
  stage_format_sft(m6, work / "codec.bin", work / "sft.jsonl");
  total.output = transcribed.output;
  return total;
}

}  // namespace podforge
