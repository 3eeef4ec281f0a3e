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

#include <future>

#include "doctest.h"
#include "podforge/service.hpp"
#include "podforge/stages.hpp"
#include "stub_backend.hpp"
#include "test_util.hpp"

using namespace podforge;
using nlohmann::json;

namespace {

const std::vector<std::string> kSentences = {"Hello there.", "Welcome to the show.",
                                             "See you next week."};

// A small n-gram bundle whose audio continuations vary with the sampling seed.
ModelBundle small_bundle() {
  std::vector<std::string> lines;
  for (const auto& s : kSentences) lines.push_back(render_sft_text(s));
  auto vocab = MergedVocab::build(lines);
  std::vector<TokenSequence> corpus;
  for (std::size_t i = 0; i < kSentences.size(); ++i) {
    for (std::uint32_t variant = 0; variant < 4; ++variant) {
      TokenSequence seq = render_sft_prompt(vocab, kSentences[i]);
      AudioTokens audio;
      for (std::uint32_t k = 0; k < 30; ++k) audio.push_back((97 * variant + 13 * k + 7 * i) % 1024);
      const auto mapped = map_audio(vocab, audio);
      seq.insert(seq.end(), mapped.begin(), mapped.end());
      seq.push_back(vocab.end_token());
      corpus.push_back(seq);
    }
  }
  NGramOptions o;
  o.order = 3;
  auto model = NGramModel::train(corpus, vocab.size(), vocab.end_token(), o);
  return ModelBundle{std::move(vocab), std::move(model)};
}

AppConfig service_config() {
  auto c = AppConfig::defaults();
  c.generation_cap_tokens = 100;
  c.temperature = 0.5;
  c.workers = 2;
  c.http_threads = 8;
  return c;
}

std::string sft_body(const std::string& text, std::uint64_t seed) {
  return json{{"text", text}, {"mode", "sft"}, {"seed", seed}}.dump();
}

std::string error_of(const SynthesisService::Response& r) {
  return json::parse(r.body).at("error").get<std::string>();
}

}  // namespace

TEST_CASE("base64") {
  const std::string s = "any carnal pleasure.";
  for (std::size_t n = 0; n <= s.size(); ++n) {
    const std::vector<std::uint8_t> bytes(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n));
    CHECK(base64_decode(base64_encode(bytes)) == bytes);
  }
  const std::vector<std::uint8_t> man{'M', 'a', 'n'};
  CHECK(base64_encode(man) == "TWFu");
  CHECK(base64_encode(std::vector<std::uint8_t>{'M'}) == "TQ==");
  CHECK_ERROR_CODE(base64_decode("abc"), ErrorCode::kInvalidArgument);
  CHECK_ERROR_CODE(base64_decode("ab!d"), ErrorCode::kInvalidArgument);
  CHECK_ERROR_CODE(base64_decode("a=bc"), ErrorCode::kInvalidArgument);
}

TEST_CASE("bind address parsing") {
  CHECK(parse_bind("127.0.0.1:8080") == std::pair<std::string, int>{"127.0.0.1", 8080});
  CHECK(parse_bind("0.0.0.0:0") == std::pair<std::string, int>{"0.0.0.0", 0});
  CHECK_ERROR_CODE(parse_bind("localhost"), ErrorCode::kInvalidArgument);
  CHECK_ERROR_CODE(parse_bind("h:99999"), ErrorCode::kInvalidArgument);
  CHECK_ERROR_CODE(parse_bind("h:80x"), ErrorCode::kInvalidArgument);
}

TEST_CASE("health reports artifact state") {
  SynthesisService svc(service_config());
  auto h = json::parse(svc.health().body);
  CHECK(h == json{{"status", "ok"}, {"model_loaded", false}, {"codec_loaded", false}});
  CHECK(svc.synthesize(sft_body("Hello there.", 1)).status == 503);
  svc.set_artifacts(small_bundle(), testutil::pinned_codebook({}));
  h = json::parse(svc.health().body);
  CHECK(h == json{{"status", "ok"}, {"model_loaded", true}, {"codec_loaded", true}});
  CHECK(svc.health().body == R"({"status":"ok","model_loaded":true,"codec_loaded":true})");
}

TEST_CASE("synthesize handler") {
  SynthesisService svc(service_config());
  svc.set_artifacts(small_bundle(), testutil::pinned_codebook({}));

  SUBCASE("valid request") {
    const auto r = svc.synthesize(sft_body("Hello there.", 4));
    REQUIRE(r.status == 200);
    const auto j = json::parse(r.body);
    const double t_inf = j.at("t_inf"), t_syn = j.at("t_syn"), ratio = j.at("r");
    CHECK(t_syn > 0.0);
    CHECK(std::abs(ratio - t_inf / t_syn) <= 1e-9);
    CHECK(j.at("truncated").is_boolean());
    const auto wav = decode_wav(base64_decode(j.at("audio_b64").get<std::string>()));
    CHECK(wav.duration_s() == doctest::Approx(t_syn).epsilon(1e-9));
  }
  SUBCASE("identical requests give identical audio") {
    const auto ra = svc.synthesize(sft_body("Welcome to the show.", 9));
    INFO(ra.body);
    const auto a = json::parse(ra.body);
    const auto b = json::parse(svc.synthesize(sft_body("Welcome to the show.", 9)).body);
    const auto c = json::parse(svc.synthesize(sft_body("Welcome to the show.", 10)).body);
    CHECK(a.at("audio_b64") == b.at("audio_b64"));
    CHECK(a.at("audio_b64") != c.at("audio_b64"));
  }
  SUBCASE("schema violations") {
    for (const char* body : {"not json", "[]", R"({"mode":"sft"})", R"({"text":"x"})",
                             R"({"text":1,"mode":"sft"})", R"({"text":"x","mode":"fast"})",
                             R"({"text":"x","mode":"sft","seed":-1})",
                             R"({"text":"x","mode":"sft","seed":"1"})",
                             R"({"text":"x","mode":"zero_shot","ref_text":"y"})",
                             R"({"text":"x","mode":"zero_shot","ref_text":"y","ref_audio_b64":"@@@@"})"}) {
      INFO(body);
      CHECK(svc.synthesize(body).status == 400);
    }
  }
  SUBCASE("empty text") {
    const auto r = svc.synthesize(R"({"text":"   ","mode":"sft"})");
    CHECK(r.status == 422);
    CHECK(error_of(r) == "EmptyText");
  }
  SUBCASE("zero-shot with a prompt pair") {
    const auto ref = base64_encode(encode_wav(testutil::sine(440, 1.0)));
    const auto body = json{{"text", "See you next week."}, {"mode", "zero_shot"},
                           {"ref_text", "Hello there."}, {"ref_audio_b64", ref}, {"seed", 2}};
    const auto r = svc.synthesize(body.dump());
    INFO(r.body);
    CHECK(r.status == 200);
  }
}

TEST_CASE("unreachable backend maps to 503") {
  auto cfg = service_config();
  cfg.backend = "127.0.0.1:" + std::to_string(testutil::closed_port());
  cfg.backend_timeout_ms = 500;
  SynthesisService svc(cfg);
  svc.set_artifacts(small_bundle(), testutil::pinned_codebook({}));
  const auto r = svc.synthesize(sft_body("Hello there.", 1));
  CHECK(r.status == 503);
  CHECK(error_of(r) == "BackendUnreachable");
}

TEST_CASE("HTTP server: methods and a concurrent burst") {
  SynthesisService svc(service_config());
  svc.set_artifacts(small_bundle(), testutil::pinned_codebook({}));
  const int port = svc.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread server([&] { svc.run(); });
  httplib::Client probe("127.0.0.1", port);
  for (int i = 0; i < 100 && !probe.Get("/health"); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }

  auto health = probe.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  auto post_health = probe.Post("/health", "", "application/json");
  REQUIRE(post_health);
  CHECK(post_health->status == 405);
  auto get_synth = probe.Get("/synthesize");
  REQUIRE(get_synth);
  CHECK(get_synth->status == 405);

  // Each request must match its own sequential result.
  std::vector<std::string> expected;
  for (std::uint64_t s = 0; s < 8; ++s) {
    expected.push_back(json::parse(svc.synthesize(sft_body(kSentences[s % 3], s)).body).at("audio_b64"));
  }
  std::vector<std::future<std::pair<int, std::string>>> burst;
  for (std::uint64_t s = 0; s < 8; ++s) {
    burst.push_back(std::async(std::launch::async, [port, s] {
      httplib::Client c("127.0.0.1", port);
      c.set_read_timeout(60, 0);
      auto res = c.Post("/synthesize", sft_body(kSentences[s % 3], s), "application/json");
      if (!res) return std::pair<int, std::string>{-1, ""};
      return std::pair<int, std::string>{res->status,
                                         json::parse(res->body).value("audio_b64", "")};
    }));
  }
  for (std::uint64_t s = 0; s < 8; ++s) {
    const auto [status, audio] = burst[s].get();
    CHECK(status == 200);
    CHECK(audio == expected[s]);
  }
  svc.stop();
  server.join();
}
