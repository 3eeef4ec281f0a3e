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

// Exercises the shared library through its C interface only.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "doctest.h"
#include "podforge/podforge.h"

namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("podforge_capi_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

std::string take(char* s) {
  std::string out = s ? s : "";
  pf_free(s);
  return out;
}

struct Artifacts {
  Scratch scratch;
  pf_config* cfg = nullptr;
  Artifacts() {
    REQUIRE(pf_gen_fixtures(scratch.dir.string().c_str(), 7, 1, 5) == PF_OK);
    REQUIRE(pf_config_create(nullptr, &cfg) == PF_OK);
    REQUIRE(pf_config_set(cfg, "truth_path", (scratch / "truth.jsonl").c_str()) == PF_OK);
    REQUIRE(pf_config_set(cfg, "codebook_size", "32") == PF_OK);
    REQUIRE(pf_config_set(cfg, "kmeans_iterations", "10") == PF_OK);
    REQUIRE(pf_config_set(cfg, "ngram_order", "12") == PF_OK);
    REQUIRE(pf_config_set(cfg, "temperature", "0") == PF_OK);
    const std::string src = scratch / "sources/src_000.wav";
    const char* inputs[] = {src.c_str()};
    pf_stage_summary s{};
    REQUIRE(pf_pipeline(cfg, inputs, 1, (scratch / "work").c_str(), "host", &s) == PF_OK);
    CHECK(s.input == 1);
    CHECK(s.output > 0);
    REQUIRE(pf_train_lm(cfg, (scratch / "work/pretrain.txt").c_str(),
                        (scratch / "work/sft.jsonl").c_str(), (scratch / "model.bin").c_str(),
                        &s) == PF_OK);
  }
  ~Artifacts() { pf_config_free(cfg); }
};

Artifacts& artifacts() {
  static Artifacts a;
  return a;
}

}  // namespace

TEST_CASE("version and status names") {
  CHECK(std::string(pf_version()) == "1.0.0");
  CHECK(std::string(pf_status_name(PF_OK)) == "Ok");
  CHECK(std::string(pf_status_name(PF_ZERO_DURATION)) == "ZeroDuration");
  CHECK(std::string(pf_status_name(PF_INTERNAL)) == "Internal");
}

TEST_CASE("config handle") {
  pf_config* cfg = nullptr;
  REQUIRE(pf_config_create(nullptr, &cfg) == PF_OK);
  char* value = nullptr;
  REQUIRE(pf_config_get(cfg, "mos_threshold_pipeline", &value) == PF_OK);
  CHECK(take(value) == "3.8");
  CHECK(pf_config_set(cfg, "seed", "42") == PF_OK);
  REQUIRE(pf_config_get(cfg, "seed", &value) == PF_OK);
  CHECK(take(value) == "42");
  CHECK(pf_config_set(cfg, "codebook_size", "0") == PF_INVALID_ARGUMENT);
  CHECK(std::string(pf_last_error()).find("codebook_size") != std::string::npos);
  REQUIRE(pf_config_get(cfg, "codebook_size", &value) == PF_OK);
  CHECK(take(value) == "1024");
  CHECK(pf_config_set(cfg, "nonsense", "1") == PF_INVALID_ARGUMENT);
  CHECK(pf_config_get(cfg, "nonsense", &value) == PF_INVALID_ARGUMENT);
  CHECK(pf_config_validate(cfg) == PF_OK);
  char* digest = nullptr;
  REQUIRE(pf_config_digest(cfg, &digest) == PF_OK);
  CHECK(take(digest).size() == 16);
  char* text = nullptr;
  REQUIRE(pf_config_serialize(cfg, &text) == PF_OK);
  CHECK(take(text).find("seed=42\n") != std::string::npos);
  pf_config_free(cfg);
  pf_config_free(nullptr);

  CHECK(pf_config_create("/nonexistent/podforge.conf", &cfg) == PF_IO_FAILURE);
  CHECK(pf_config_create(nullptr, nullptr) == PF_INVALID_ARGUMENT);
}

TEST_CASE("metrics") {
  double v = -1;
  REQUIRE(pf_wer("a b c", "a x c", &v) == PF_OK);
  CHECK(v == doctest::Approx(1.0 / 3.0));
  REQUIRE(pf_speed_ratio(3.3, 10.0, &v) == PF_OK);
  CHECK(v == doctest::Approx(0.33));
  CHECK(pf_speed_ratio(1.0, 0.0, &v) == PF_ZERO_DURATION);
  CHECK(pf_wer(nullptr, "x", &v) == PF_INVALID_ARGUMENT);
  CHECK(pf_sim_files("/nonexistent.wav", "/nonexistent.wav", &v) == PF_IO_FAILURE);
}

TEST_CASE("codec through the C interface") {
  auto& a = artifacts();
  pf_codebook* cb = nullptr;
  CHECK(pf_codebook_load((a.scratch / "missing.bin").c_str(), &cb) == PF_IO_FAILURE);
  REQUIRE(pf_codebook_load((a.scratch / "work/codec.bin").c_str(), &cb) == PF_OK);
  CHECK(pf_codebook_size(cb) == 32);
  std::vector<float> tone(32000);
  for (std::size_t i = 0; i < tone.size(); ++i) tone[i] = 0.3f * static_cast<float>(std::sin(0.2 * i));
  std::uint32_t* tokens = nullptr;
  std::size_t n_tokens = 0;
  REQUIRE(pf_encode(cb, tone.data(), tone.size(), 16000, &tokens, &n_tokens) == PF_OK);
  CHECK(n_tokens == 49);
  float* samples = nullptr;
  std::size_t n_samples = 0;
  REQUIRE(pf_decode(cb, tokens, n_tokens, &samples, &n_samples) == PF_OK);
  CHECK(n_samples > 0);
  pf_free(samples);
  tokens[0] = 40;
  CHECK(pf_decode(cb, tokens, n_tokens, &samples, &n_samples) == PF_INVALID_TOKEN);
  pf_free(tokens);
  CHECK(pf_encode(cb, tone.data(), 500, 16000, &tokens, &n_tokens) == PF_TOO_SHORT);
  pf_codebook_free(cb);
}

TEST_CASE("synthesis and evaluation through the C interface") {
  auto& a = artifacts();
  pf_model* model = nullptr;
  pf_codebook* cb = nullptr;
  REQUIRE(pf_model_load((a.scratch / "model.bin").c_str(), &model) == PF_OK);
  REQUIRE(pf_codebook_load((a.scratch / "work/codec.bin").c_str(), &cb) == PF_OK);
  CHECK(pf_model_vocab_size(model) > 1024);

  float* samples = nullptr;
  std::size_t n = 0;
  pf_synth_result r{};
  REQUIRE(pf_synthesize(a.cfg, model, cb, "Hello there.", "sft", nullptr, nullptr, 0, 0, 1,
                        &samples, &n, &r) == PF_OK);
  CHECK(n > 0);
  CHECK(r.t_syn == doctest::Approx(static_cast<double>(n) / 16000.0));
  CHECK(r.r == doctest::Approx(r.t_inf / r.t_syn));
  CHECK(r.sentences == 1);
  pf_free(samples);
  CHECK(pf_synthesize(a.cfg, model, cb, "  ", "sft", nullptr, nullptr, 0, 0, 1, &samples, &n,
                      &r) == PF_EMPTY_TEXT);
  CHECK(pf_synthesize(a.cfg, model, cb, "Hi.", "zero_shot", "Hello.", nullptr, 0, 0, 1, &samples,
                      &n, &r) == PF_PRECONDITION);
  CHECK(pf_synthesize(a.cfg, model, cb, "Hi.", "fast", nullptr, nullptr, 0, 0, 1, &samples, &n,
                      &r) == PF_INVALID_ARGUMENT);

  REQUIRE(pf_synth_file(a.cfg, (a.scratch / "model.bin").c_str(),
                        (a.scratch / "work/codec.bin").c_str(), "Hello there.", "sft", nullptr,
                        nullptr, (a.scratch / "hello.wav").c_str(), &r) == PF_OK);
  CHECK(fs::file_size(a.scratch / "hello.wav") > 44);
  double s = 0;
  REQUIRE(pf_sim_files((a.scratch / "hello.wav").c_str(), (a.scratch / "hello.wav").c_str(), &s) ==
          PF_OK);
  CHECK(s == doctest::Approx(1.0));

  char* table = nullptr;
  REQUIRE(pf_eval(a.cfg, (a.scratch / "work/transcribed/manifest.jsonl").c_str(),
                  (a.scratch / "model.bin").c_str(), (a.scratch / "work/codec.bin").c_str(), "sft",
                  "capi", (a.scratch / "report.json").c_str(), &table) == PF_OK);
  const auto text = take(table);
  CHECK(text.find("capi") != std::string::npos);
  CHECK(text.find("0.00") != std::string::npos);
  CHECK(fs::exists(a.scratch / "report.json"));

  pf_model_free(model);
  pf_codebook_free(cb);
}

TEST_CASE("server lifecycle") {
  auto& a = artifacts();
  pf_server* server = nullptr;
  CHECK(pf_server_create(a.cfg, (a.scratch / "missing.bin").c_str(),
                         (a.scratch / "work/codec.bin").c_str(), &server) == PF_IO_FAILURE);
  REQUIRE(pf_server_create(a.cfg, (a.scratch / "model.bin").c_str(),
                           (a.scratch / "work/codec.bin").c_str(), &server) == PF_OK);
  int port = 0;
  REQUIRE(pf_server_bind(server, "127.0.0.1", 0, &port) == PF_OK);
  CHECK(port > 0);
  pf_status run_status = PF_INTERNAL;
  std::thread t([&] { run_status = pf_server_run(server); });
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  pf_server_stop(server);
  t.join();
  CHECK(run_status == PF_OK);
  pf_server_free(server);
}
