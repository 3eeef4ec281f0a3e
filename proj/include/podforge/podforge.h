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

/* PodForge C API. All functions return a pf_status; on failure a message
 * for the calling thread is available from pf_last_error(). Strings and
 * buffers returned through out-parameters are owned by the caller and must
 * be released with pf_free(). */

#ifndef PODFORGE_PODFORGE_H_
#define PODFORGE_PODFORGE_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PF_API __declspec(dllexport)
#else
#define PF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pf_status {
  PF_OK = 0,
  PF_INVALID_ARGUMENT = 1,
  PF_IO_FAILURE = 2,
  PF_MALFORMED_CONTAINER = 3,
  PF_UNSUPPORTED_ENCODING = 4,
  PF_TOO_SHORT = 5,
  PF_EMPTY_AUDIO = 6,
  PF_STAGE_FAILURE = 7,
  PF_MISSING_SCORE = 8,
  PF_TRANSCRIBER_FAILURE = 9,
  PF_CODEC_MISMATCH = 10,
  PF_MIXED_SPEAKERS = 11,
  PF_INSUFFICIENT_DATA = 12,
  PF_INVALID_TOKEN = 13,
  PF_EMPTY_CORPUS = 14,
  PF_NON_AUDIO_TOKEN = 15,
  PF_BACKEND_UNREACHABLE = 16,
  PF_INVALID_BACKEND_OUTPUT = 17,
  PF_TIMEOUT = 18,
  PF_EMPTY_TEXT = 19,
  PF_ALL_SENTENCES_FAILED = 20,
  PF_RATE_MISMATCH = 21,
  PF_ZERO_DURATION = 22,
  PF_PRECONDITION = 23,
  PF_UNSUPPORTED = 24,
  PF_INTERNAL = 100
} pf_status;

typedef struct pf_config pf_config;
typedef struct pf_codebook pf_codebook;
typedef struct pf_model pf_model;
typedef struct pf_server pf_server;

typedef struct pf_stage_summary {
  size_t input;
  size_t output;
  size_t dropped;
} pf_stage_summary;

typedef struct pf_synth_result {
  double t_inf;
  double t_syn;
  double r;
  int truncated;
  int degraded;
  size_t sentences;
} pf_synth_result;

PF_API const char* pf_version(void);
PF_API const char* pf_status_name(pf_status status);
/* Message of the last failure on this thread, "" if none. */
PF_API const char* pf_last_error(void);
PF_API void pf_free(void* p);

/* Configuration. A NULL path falls back to $PODFORGE_CONFIG, then defaults. */
PF_API pf_status pf_config_create(const char* path, pf_config** out);
PF_API pf_status pf_config_set(pf_config* cfg, const char* key, const char* value);
PF_API pf_status pf_config_get(const pf_config* cfg, const char* key, char** value);
PF_API pf_status pf_config_validate(const pf_config* cfg);
PF_API pf_status pf_config_serialize(const pf_config* cfg, char** text);
PF_API pf_status pf_config_digest(const pf_config* cfg, char** digest);
PF_API void pf_config_free(pf_config* cfg);

/* Corpus pipeline stages. `summary` may be NULL. */
PF_API pf_status pf_ingest(const pf_config* cfg, const char* const* inputs, size_t n_inputs,
                           const char* out_manifest, const char* speaker,
                           pf_stage_summary* summary);
PF_API pf_status pf_clean(const pf_config* cfg, const char* manifest, const char* out_manifest,
                          pf_stage_summary* summary);
PF_API pf_status pf_segment(const pf_config* cfg, const char* manifest, const char* out_manifest,
                            pf_stage_summary* summary);
PF_API pf_status pf_score(const pf_config* cfg, const char* manifest, const char* out_manifest,
                          double threshold, pf_stage_summary* summary);
PF_API pf_status pf_filter_speaker(const pf_config* cfg, const char* manifest,
                                   const char* out_manifest, pf_stage_summary* summary);
PF_API pf_status pf_transcribe(const pf_config* cfg, const char* manifest,
                               const char* out_manifest, pf_stage_summary* summary);
PF_API pf_status pf_format_pretrain(const char* manifest, const char* codec, const char* out,
                                    pf_stage_summary* summary);
PF_API pf_status pf_format_sft(const char* manifest, const char* codec, const char* out,
                               pf_stage_summary* summary);
PF_API pf_status pf_train_codec(const pf_config* cfg, const char* manifest, const char* out,
                                pf_stage_summary* summary);
/* Either corpus path may be NULL, not both. */
PF_API pf_status pf_train_lm(const pf_config* cfg, const char* pretrain, const char* sft,
                             const char* out, pf_stage_summary* summary);
PF_API pf_status pf_pipeline(const pf_config* cfg, const char* const* inputs, size_t n_inputs,
                             const char* work_dir, const char* speaker,
                             pf_stage_summary* summary);

/* Artifacts. */
PF_API pf_status pf_codebook_load(const char* path, pf_codebook** out);
PF_API size_t pf_codebook_size(const pf_codebook* cb);
PF_API void pf_codebook_free(pf_codebook* cb);
PF_API pf_status pf_encode(const pf_codebook* cb, const float* samples, size_t n, int sample_rate,
                           uint32_t** tokens, size_t* n_tokens);
PF_API pf_status pf_decode(const pf_codebook* cb, const uint32_t* tokens, size_t n_tokens,
                           float** samples, size_t* n_samples);

PF_API pf_status pf_model_load(const char* path, pf_model** out);
PF_API size_t pf_model_vocab_size(const pf_model* m);
PF_API void pf_model_free(pf_model* m);

/* Synthesis. `mode` is "sft" or "zero_shot"; reference fields are ignored in
 * sft mode. Output is 16 kHz mono. `result` may be NULL. */
PF_API pf_status pf_synthesize(const pf_config* cfg, const pf_model* model, const pf_codebook* cb,
                               const char* text, const char* mode, const char* ref_text,
                               const float* ref_samples, size_t ref_n, int ref_rate,
                               uint64_t seed, float** samples, size_t* n_samples,
                               pf_synth_result* result);
PF_API pf_status pf_synth_file(const pf_config* cfg, const char* model_path,
                               const char* codec_path, const char* text, const char* mode,
                               const char* ref_text, const char* ref_audio_path,
                               const char* out_wav, pf_synth_result* result);

/* Evaluation. Writes the JSON report to `out_report`; `table` (may be NULL)
 * receives the metric and speed tables as text. */
PF_API pf_status pf_eval(const pf_config* cfg, const char* manifest, const char* model_path,
                         const char* codec_path, const char* mode, const char* model_name,
                         const char* out_report, char** table);

/* Metrics. */
PF_API pf_status pf_wer(const char* reference, const char* hypothesis, double* out);
PF_API pf_status pf_sim_files(const char* wav_a, const char* wav_b, double* out);
PF_API pf_status pf_speed_ratio(double t_inf, double t_syn, double* out);

/* HTTP service. Artifact paths may be NULL to start without them. */
PF_API pf_status pf_server_create(const pf_config* cfg, const char* model_path,
                                  const char* codec_path, pf_server** out);
/* port 0 picks a free port; the bound port is written to `bound_port`. */
PF_API pf_status pf_server_bind(pf_server* s, const char* host, int port, int* bound_port);
/* Blocks until pf_server_stop() is called from another thread. */
PF_API pf_status pf_server_run(pf_server* s);
PF_API void pf_server_stop(pf_server* s);
PF_API void pf_server_free(pf_server* s);

/* Deterministic synthetic corpus for demos and tests. */
PF_API pf_status pf_gen_fixtures(const char* dir, uint64_t seed, size_t sources,
                                 size_t utterances_per_source);

#ifdef __cplusplus
}
#endif

#endif /* PODFORGE_PODFORGE_H_ */
