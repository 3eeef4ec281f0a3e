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

#include "podforge/podforge.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "podforge/error.hpp"
#include "podforge/eval.hpp"
#include "podforge/fixtures.hpp"
#include "podforge/service.hpp"
#include "podforge/stages.hpp"

struct pf_config {
  podforge::AppConfig cfg;
};
struct pf_codebook {
  podforge::Codebook cb;
};
struct pf_model {
  podforge::ModelBundle bundle;
};
struct pf_server {
  explicit pf_server(podforge::AppConfig cfg) : service(std::move(cfg)) {}
  podforge::SynthesisService service;
};

namespace {

using podforge::Error;
using podforge::ErrorCode;

thread_local std::string g_last_error;

template <typename Fn>
pf_status guard(Fn&& fn) noexcept {
  try {
    fn();
    g_last_error.clear();
    return PF_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return static_cast<pf_status>(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return PF_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PF_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return PF_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw Error(ErrorCode::kInvalidArgument, std::string(what) + " is null");
}

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename T>
T* dup_array(const std::vector<T>& v) {
  auto* out = static_cast<T*>(std::malloc(std::max<std::size_t>(1, v.size()) * sizeof(T)));
  if (out == nullptr) throw std::bad_alloc();
  if (!v.empty()) std::memcpy(out, v.data(), v.size() * sizeof(T));
  return out;
}

const podforge::AppConfig& config_of(const pf_config* cfg) {
  static const podforge::AppConfig fallback = podforge::AppConfig::defaults();
  return cfg != nullptr ? cfg->cfg : fallback;
}

void fill(pf_stage_summary* out, const podforge::StageSummary& s) {
  if (out != nullptr) *out = {s.input, s.output, s.dropped};
}

void fill(pf_synth_result* out, const podforge::SynthesisResult& r) {
  if (out == nullptr) return;
  out->t_inf = r.t_inf;
  out->t_syn = r.t_syn;
  out->r = r.t_syn > 0.0 ? podforge::speed_ratio(r.t_inf, r.t_syn).r : 0.0;
  out->truncated = r.truncated ? 1 : 0;
  out->degraded = r.degraded ? 1 : 0;
  out->sentences = r.sentences_attempted;
}

std::vector<std::filesystem::path> paths(const char* const* inputs, std::size_t n) {
  if (n > 0) require(inputs, "inputs");
  std::vector<std::filesystem::path> out;
  for (std::size_t i = 0; i < n; ++i) {
    require(inputs[i], "input path");
    out.emplace_back(inputs[i]);
  }
  return out;
}

podforge::SynthesisMode mode_or_sft(const char* mode) {
  if (mode == nullptr) return podforge::SynthesisMode::kSft;
  const std::string m(mode);
  if (m == "sft") return podforge::SynthesisMode::kSft;
  if (m == "zero_shot" || m == "zero-shot") return podforge::SynthesisMode::kZeroShot;
  throw Error(ErrorCode::kInvalidArgument, "mode must be sft or zero_shot");
}

}  // namespace

extern "C" {

const char* pf_version(void) { return "1.0.0"; }

const char* pf_status_name(pf_status status) {
  if (status == PF_OK) return "Ok";
  if (status == PF_INTERNAL) return "Internal";
  if (status < PF_INVALID_ARGUMENT || status > PF_UNSUPPORTED) return "Unknown";
  return podforge::error_code_name(static_cast<ErrorCode>(status));
}

const char* pf_last_error(void) { return g_last_error.c_str(); }

void pf_free(void* p) { std::free(p); }

pf_status pf_config_create(const char* path, pf_config** out) {
  return guard([&] {
    require(out, "out");
    std::optional<std::filesystem::path> p;
    if (path != nullptr) p = path;
    *out = new pf_config{podforge::resolve_config(p)};
  });
}

pf_status pf_config_set(pf_config* cfg, const char* key, const char* value) {
  return guard([&] {
    require(cfg, "cfg");
    require(key, "key");
    require(value, "value");
    podforge::AppConfig next = cfg->cfg;
    next.set(key, value);
    next.validate();
    cfg->cfg = std::move(next);
  });
}

pf_status pf_config_get(const pf_config* cfg, const char* key, char** value) {
  return guard([&] {
    require(cfg, "cfg");
    require(key, "key");
    require(value, "value");
    const std::string text = cfg->cfg.serialize();
    const std::string prefix = std::string(key) + "=";
    std::size_t pos = 0;
    while (pos < text.size()) {
      const auto nl = text.find('\n', pos);
      const std::string line = text.substr(pos, nl - pos);
      if (line.rfind(prefix, 0) == 0) {
        *value = dup_string(line.substr(prefix.size()));
        return;
      }
      pos = nl + 1;
    }
    throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + std::string(key) + "'");
  });
}

pf_status pf_config_validate(const pf_config* cfg) {
  return guard([&] {
    require(cfg, "cfg");
    cfg->cfg.validate();
  });
}

pf_status pf_config_serialize(const pf_config* cfg, char** text) {
  return guard([&] {
    require(cfg, "cfg");
    require(text, "text");
    *text = dup_string(cfg->cfg.serialize());
  });
}

pf_status pf_config_digest(const pf_config* cfg, char** digest) {
  return guard([&] {
    require(cfg, "cfg");
    require(digest, "digest");
    *digest = dup_string(cfg->cfg.digest());
  });
}

void pf_config_free(pf_config* cfg) { delete cfg; }

pf_status pf_ingest(const pf_config* cfg, const char* const* inputs, size_t n_inputs,
                    const char* out_manifest, const char* speaker, pf_stage_summary* summary) {
  return guard([&] {
    require(out_manifest, "out_manifest");
    fill(summary, podforge::stage_ingest(paths(inputs, n_inputs), out_manifest, config_of(cfg),
                                         speaker != nullptr ? speaker : ""));
  });
}

pf_status pf_clean(const pf_config* cfg, const char* manifest, const char* out_manifest,
                   pf_stage_summary* summary) {
  return guard([&] {
    require(manifest, "manifest");
    require(out_manifest, "out_manifest");
    fill(summary, podforge::stage_clean(manifest, out_manifest, config_of(cfg)));
  });
}

pf_status pf_segment(const pf_config* cfg, const char* manifest, const char* out_manifest,
                     pf_stage_summary* summary) {
  return guard([&] {
    require(manifest, "manifest");
    require(out_manifest, "out_manifest");
    fill(summary, podforge::stage_segment(manifest, out_manifest, config_of(cfg)));
  });
}

pf_status pf_score(const pf_config* cfg, const char* manifest, const char* out_manifest,
                   double threshold, pf_stage_summary* summary) {
  return guard([&] {
    require(manifest, "manifest");
    require(out_manifest, "out_manifest");
    fill(summary, podforge::stage_score(manifest, out_manifest, config_of(cfg), threshold));
  });
}

pf_status pf_filter_speaker(const pf_config* cfg, const char* manifest, const char* out_manifest,
                            pf_stage_summary* summary) {
  return guard([&] {
    require(manifest, "manifest");
    require(out_manifest, "out_manifest");
    fill(summary, podforge::stage_filter_speaker(manifest, out_manifest, config_of(cfg)));
  });
}

pf_status pf_transcribe(const pf_config* cfg, const char* manifest, const char* out_manifest,
                        pf_stage_summary* summary) {
  return guard([&] {
    require(manifest, "manifest");
    require(out_manifest, "out_manifest");
    fill(summary, podforge::stage_transcribe(manifest, out_manifest, config_of(cfg)));
  });
}

pf_status pf_format_pretrain(const char* manifest, const char* codec, const char* out,
                             pf_stage_summary* summary) {
  return guard([&] {
    require(manifest, "manifest");
    require(codec, "codec");
    require(out, "out");
    fill(summary, podforge::stage_format_pretrain(manifest, codec, out));
  });
}

pf_status pf_format_sft(const char* manifest, const char* codec, const char* out,
                        pf_stage_summary* summary) {
  return guard([&] {
    require(manifest, "manifest");
    require(codec, "codec");
    require(out, "out");
    fill(summary, podforge::stage_format_sft(manifest, codec, out));
  });
}

pf_status pf_train_codec(const pf_config* cfg, const char* manifest, const char* out,
                         pf_stage_summary* summary) {
  return guard([&] {
    require(manifest, "manifest");
    require(out, "out");
    fill(summary, podforge::stage_train_codec(manifest, out, config_of(cfg)));
  });
}

pf_status pf_train_lm(const pf_config* cfg, const char* pretrain, const char* sft, const char* out,
                      pf_stage_summary* summary) {
  return guard([&] {
    require(out, "out");
    std::optional<std::filesystem::path> p, s;
    if (pretrain != nullptr) p = pretrain;
    if (sft != nullptr) s = sft;
    fill(summary, podforge::stage_train_lm(p, s, out, config_of(cfg)));
  });
}

pf_status pf_pipeline(const pf_config* cfg, const char* const* inputs, size_t n_inputs,
                      const char* work_dir, const char* speaker, pf_stage_summary* summary) {
  return guard([&] {
    require(work_dir, "work_dir");
    fill(summary, podforge::stage_pipeline(paths(inputs, n_inputs), work_dir, config_of(cfg),
                                           speaker != nullptr ? speaker : ""));
  });
}

pf_status pf_codebook_load(const char* path, pf_codebook** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new pf_codebook{podforge::Codebook::load(path)};
  });
}

size_t pf_codebook_size(const pf_codebook* cb) { return cb != nullptr ? cb->cb.size() : 0; }

void pf_codebook_free(pf_codebook* cb) { delete cb; }

pf_status pf_encode(const pf_codebook* cb, const float* samples, size_t n, int sample_rate,
                    uint32_t** tokens, size_t* n_tokens) {
  return guard([&] {
    require(cb, "codebook");
    require(tokens, "tokens");
    require(n_tokens, "n_tokens");
    if (n > 0) require(samples, "samples");
    if (sample_rate <= 0) throw Error(ErrorCode::kInvalidArgument, "sample_rate must be positive");
    podforge::Waveform w;
    w.sample_rate = sample_rate;
    if (n > 0) w.samples.assign(samples, samples + n);
    if (sample_rate != podforge::kCanonicalRate) w = podforge::resample(w, podforge::kCanonicalRate);
    const auto ids = podforge::encode(w, cb->cb);
    *tokens = dup_array(ids);
    *n_tokens = ids.size();
  });
}

pf_status pf_decode(const pf_codebook* cb, const uint32_t* tokens, size_t n_tokens, float** samples,
                    size_t* n_samples) {
  return guard([&] {
    require(cb, "codebook");
    require(samples, "samples");
    require(n_samples, "n_samples");
    if (n_tokens > 0) require(tokens, "tokens");
    const auto w = podforge::decode(std::span<const uint32_t>(tokens, n_tokens), cb->cb);
    *samples = dup_array(w.samples);
    *n_samples = w.samples.size();
  });
}

pf_status pf_model_load(const char* path, pf_model** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new pf_model{podforge::ModelBundle::load(path)};
  });
}

size_t pf_model_vocab_size(const pf_model* m) { return m != nullptr ? m->bundle.vocab.size() : 0; }

void pf_model_free(pf_model* m) { delete m; }

pf_status pf_synthesize(const pf_config* cfg, const pf_model* model, const pf_codebook* cb,
                        const char* text, const char* mode, const char* ref_text,
                        const float* ref_samples, size_t ref_n, int ref_rate, uint64_t seed,
                        float** samples, size_t* n_samples, pf_synth_result* result) {
  return guard([&] {
    require(model, "model");
    require(cb, "codebook");
    require(text, "text");
    require(samples, "samples");
    require(n_samples, "n_samples");
    const auto& c = config_of(cfg);
    podforge::SynthesisRequest req;
    req.target_text = text;
    req.mode = mode_or_sft(mode);
    req.seed = seed;
    req.max_seconds_per_sentence =
        static_cast<double>(c.generation_cap_tokens) / podforge::kTokenRate;
    if (req.mode == podforge::SynthesisMode::kZeroShot) {
      if (ref_n == 0) throw Error(ErrorCode::kPrecondition, "zero-shot needs reference audio");
      require(ref_samples, "ref_samples");
      req.ref_text = ref_text != nullptr ? ref_text : "";
      req.ref_audio.samples.assign(ref_samples, ref_samples + ref_n);
      req.ref_audio.sample_rate = ref_rate > 0 ? ref_rate : podforge::kCanonicalRate;
    }
    const auto m = podforge::make_model(model->bundle, c);
    const auto r = podforge::synthesize(req, *m, model->bundle.vocab, cb->cb,
                                        podforge::synthesis_options(c));
    *samples = dup_array(r.audio.samples);
    *n_samples = r.audio.samples.size();
    fill(result, r);
  });
}

pf_status pf_synth_file(const pf_config* cfg, const char* model_path, const char* codec_path,
                        const char* text, const char* mode, const char* ref_text,
                        const char* ref_audio_path, const char* out_wav, pf_synth_result* result) {
  return guard([&] {
    require(model_path, "model");
    require(codec_path, "codec");
    require(text, "text");
    require(out_wav, "out");
    podforge::SynthRequestFiles req;
    req.text = text;
    req.mode = mode_or_sft(mode);
    req.ref_text = ref_text != nullptr ? ref_text : "";
    if (ref_audio_path != nullptr) req.ref_audio = ref_audio_path;
    req.model = model_path;
    req.codec = codec_path;
    req.out = out_wav;
    fill(result, podforge::stage_synth(req, config_of(cfg)));
  });
}

pf_status pf_eval(const pf_config* cfg, const char* manifest, const char* model_path,
                  const char* codec_path, const char* mode, const char* model_name,
                  const char* out_report, char** table) {
  return guard([&] {
    require(manifest, "manifest");
    require(model_path, "model");
    require(codec_path, "codec");
    require(out_report, "out");
    podforge::EvalFiles f;
    f.manifest = manifest;
    f.model = model_path;
    f.codec = codec_path;
    f.out = out_report;
    f.mode = mode_or_sft(mode);
    if (model_name != nullptr) f.model_name = model_name;
    const auto report = podforge::stage_eval(f, config_of(cfg));
    if (table != nullptr) {
      *table = dup_string(podforge::render_table(report) + "\n" +
                          podforge::render_speed_table(report));
    }
  });
}

pf_status pf_wer(const char* reference, const char* hypothesis, double* out) {
  return guard([&] {
    require(reference, "reference");
    require(hypothesis, "hypothesis");
    require(out, "out");
    *out = podforge::wer(reference, hypothesis);
  });
}

pf_status pf_sim_files(const char* wav_a, const char* wav_b, double* out) {
  return guard([&] {
    require(wav_a, "wav_a");
    require(wav_b, "wav_b");
    require(out, "out");
    *out = podforge::sim(podforge::load_wav(wav_a), podforge::load_wav(wav_b));
  });
}

pf_status pf_speed_ratio(double t_inf, double t_syn, double* out) {
  return guard([&] {
    require(out, "out");
    *out = podforge::speed_ratio(t_inf, t_syn).r;
  });
}

pf_status pf_server_create(const pf_config* cfg, const char* model_path, const char* codec_path,
                           pf_server** out) {
  return guard([&] {
    require(out, "out");
    auto s = std::make_unique<pf_server>(config_of(cfg));
    if ((model_path == nullptr) != (codec_path == nullptr)) {
      throw Error(ErrorCode::kInvalidArgument, "model and codec are loaded together");
    }
    if (model_path != nullptr) s->service.load(model_path, codec_path);
    *out = s.release();
  });
}

pf_status pf_server_bind(pf_server* s, const char* host, int port, int* bound_port) {
  return guard([&] {
    require(s, "server");
    require(host, "host");
    const int p = s->service.bind(host, port);
    if (bound_port != nullptr) *bound_port = p;
  });
}

pf_status pf_server_run(pf_server* s) {
  return guard([&] {
    require(s, "server");
    if (!s->service.run()) throw Error(ErrorCode::kIoFailure, "server stopped with an error");
  });
}

void pf_server_stop(pf_server* s) {
  if (s != nullptr) s->service.stop();
}

void pf_server_free(pf_server* s) { delete s; }

pf_status pf_gen_fixtures(const char* dir, uint64_t seed, size_t sources,
                          size_t utterances_per_source) {
  return guard([&] {
    require(dir, "dir");
    podforge::CorpusSpec spec;
    spec.seed = seed;
    if (sources > 0) spec.sources = sources;
    if (utterances_per_source > 0) spec.utterances_per_source = utterances_per_source;
    podforge::write_fixture_tree(dir, spec);
  });
}

}  // extern "C"
