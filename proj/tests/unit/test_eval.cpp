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

#include <cmath>
#include <functional>

#include "doctest.h"
#include "oracles.hpp"
#include "podforge/eval.hpp"
#include "podforge/fixtures.hpp"
#include "podforge/pipeline.hpp"
#include "podforge/synthesis.hpp"
#include "test_util.hpp"

using namespace podforge;

namespace {

// Every word sequence of length 0..4 over a three-word alphabet.
std::vector<std::vector<std::string>> all_sequences() {
  const std::vector<std::string> alphabet{"a", "b", "c"};
  std::vector<std::vector<std::string>> out{{}};
  std::vector<std::vector<std::string>> frontier{{}};
  for (int len = 1; len <= 4; ++len) {
    std::vector<std::vector<std::string>> next;
    for (const auto& s : frontier) {
      for (const auto& w : alphabet) {
        auto t = s;
        t.push_back(w);
        next.push_back(t);
      }
    }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

std::string join_words(const std::vector<std::string>& ws) {
  std::string s;
  for (const auto& w : ws) s += (s.empty() ? "" : " ") + w;
  return s;
}

EvalReport sample_report() {
  EvalReport r;
  r.rows.push_back({"podforge-ngram", "fixture", 12.5, 3.25, 0.875, 0.33});
  r.metadata = {"2026-01-01T00:00:00Z", "abc123", 42, "sft", 3, 1};
  RecordResult ok;
  ok.id = "u0";
  ok.wer = 0.125;
  ok.sim = 0.875;
  ok.mos = 3.25;
  ok.t_inf = 3.3;
  ok.t_syn = 10.0;
  ok.r = 0.33;
  ok.hypothesis = "hello world";
  RecordResult bad;
  bad.id = "u1";
  bad.error = "Timeout: backend";
  r.records = {ok, bad};
  return r;
}

}  // namespace

TEST_CASE("word error rate") {
  CHECK(wer("hello world", "hello world") == 0.0);
  CHECK(wer("a b c", "a x c") == doctest::Approx(1.0 / 3.0));
  CHECK(wer("a b", "") == 1.0);
  CHECK(wer("", "x y") == 2.0);
  CHECK(wer("", "") == 0.0);
  CHECK(wer("Hello, World!", "hello world.") == 0.0);
  CHECK(normalize_words("  It's  a TEST. ") == std::vector<std::string>{"its", "a", "test"});

  const auto seqs = all_sequences();
  REQUIRE(seqs.size() == 121);
  std::size_t pairs = 0;
  for (const auto& ref : seqs) {
    CHECK(wer(join_words(ref), join_words(ref)) == 0.0);
    for (const auto& hyp : seqs) {
      const double expected = static_cast<double>(oracle::edit_distance(ref, hyp)) /
                              static_cast<double>(std::max<std::size_t>(1, ref.size()));
      REQUIRE(wer(join_words(ref), join_words(hyp)) == expected);
      ++pairs;
    }
  }
  CHECK(pairs == 121 * 121);
}

TEST_CASE("speaker embedding and similarity") {
  const auto& voices = fixture_voices();
  const auto a = synthesize_voice(voices[2], "Morning light over the harbor.", 1);
  SUBCASE("identity and symmetry") {
    CHECK(speaker_embedding(a).values == speaker_embedding(a).values);
    CHECK(sim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    const auto b = synthesize_voice(voices[3], "Another line entirely.", 2);
    CHECK(sim(a, b) == sim(b, a));
    CHECK(std::abs(sim(a, b)) <= 1.0 + 1e-9);
  }
  SUBCASE("constant features have zero spread") {
    const auto e = speaker_embedding(testutil::sine(1000, 1.0));
    for (std::size_t d = kMfccDims; d < kEmbeddingDims; ++d) CHECK(e.values[d] <= 1e-6);
  }
  SUBCASE("zero embedding gives zero similarity") {
    const SpeakerEmbedding zero{};
    CHECK(cosine_similarity(zero, zero) == 0.0);
    CHECK(cosine_similarity(zero, speaker_embedding(a)) == 0.0);
  }
  SUBCASE("short input") {
    CHECK_ERROR_CODE(speaker_embedding(testutil::silence(1000)), ErrorCode::kTooShort);
    CHECK_ERROR_CODE(sim(a, testutil::silence(1023)), ErrorCode::kTooShort);
  }
  SUBCASE("same voice beats cross voice") {
    Rng rng(99);
    int wins = 0;
    for (int i = 0; i < 50; ++i) {
      const std::size_t v = rng.index(voices.size());
      std::size_t u = rng.index(voices.size() - 1);
      if (u >= v) ++u;
      const auto x = synthesize_voice(voices[v], random_sentence(rng, 5), rng.next_u64());
      const auto y = synthesize_voice(voices[v], random_sentence(rng, 5), rng.next_u64());
      const auto z = synthesize_voice(voices[u], random_sentence(rng, 5), rng.next_u64());
      const double same = sim(x, y);
      const double cross = sim(x, z);
      CHECK(std::abs(same) <= 1.0 + 1e-9);
      CHECK(std::abs(cross) <= 1.0 + 1e-9);
      if (same > cross) ++wins;
    }
    MESSAGE("same-voice wins " << wins << "/50");
    CHECK(wins >= 48);
  }
}

TEST_CASE("speed ratio") {
  const auto m = speed_ratio(3.3, 10.0);
  CHECK(m.r == doctest::Approx(0.33).epsilon(1e-12));
  CHECK(speed_ratio(2.5, 2.5).r == 1.0);
  CHECK(speed_ratio(0.0, 1.0).r == 0.0);
  for (double t : {0.001, 0.37, 1.0, 17.3, 1e4}) {
    for (double s : {0.01, 0.5, 3.0, 99.9}) {
      CHECK(std::abs(speed_ratio(t, s).r * s - t) <= 1e-12 * t);
    }
  }
  CHECK_ERROR_CODE(speed_ratio(1.0, 0.0), ErrorCode::kZeroDuration);
  CHECK_ERROR_CODE(speed_ratio(1.0, -1.0), ErrorCode::kZeroDuration);
}

TEST_CASE("report serialization and tables") {
  const auto r = sample_report();
  CHECK(report_from_json(report_to_json(r)) == r);
  testutil::TempDir dir;
  save_report(r, dir / "r.json");
  CHECK(load_report(dir / "r.json") == r);
  const auto j = report_to_json(r);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"metadata", "rows", "records"});

  const auto stripped = without_timing(r);
  CHECK(stripped.metadata.timestamp.empty());
  CHECK(stripped.records[0].t_inf == 0.0);
  CHECK(stripped.records[0].r == 0.0);
  CHECK(stripped.rows[0].r == 0.0);
  CHECK(stripped.rows[0].wer_pct == 12.5);

  const auto table = render_table(r);
  CHECK(table.find("podforge-ngram") != std::string::npos);
  CHECK(table.find("12.50") != std::string::npos);
  CHECK(render_speed_table(r).find("0.33") != std::string::npos);
}

TEST_CASE("run_eval on an empty dataset") {
  const auto vocab = MergedVocab::build(std::vector<std::string>{"x"});
  const UniformModel model(vocab.size(), vocab.end_token());
  const LookupTranscriber t;
  const SnrProxyScorer s;
  EvalOptions o;
  o.timestamp = "t";
  const auto r = run_eval(std::vector<EvalItem>{}, model, vocab, testutil::pinned_codebook({}), t, s, o);
  CHECK(r.rows.empty());
  CHECK(r.metadata.records_total == 0);
  CHECK(r.metadata.records_failed == 0);
  CHECK(r.records.empty());
}

TEST_CASE("closed-loop run_eval reaches zero WER") {
  const std::vector<std::string> sentences{"Good morning friends.", "The market opens late."};
  std::vector<std::string> lines;
  for (const auto& s : sentences) lines.push_back(render_sft_text(s));
  const auto vocab = MergedVocab::build(lines);
  const auto cb = testutil::pinned_codebook({});

  std::vector<TokenSequence> corpus;
  std::vector<EvalItem> items;
  LookupTranscriber truth;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    AudioTokens audio;
    for (std::uint32_t k = 0; k < 40; ++k) audio.push_back(static_cast<std::uint32_t>(100 + 300 * i + k));
    TokenSequence seq = render_sft_prompt(vocab, sentences[i]);
    const auto mapped = map_audio(vocab, audio);
    seq.insert(seq.end(), mapped.begin(), mapped.end());
    seq.push_back(vocab.end_token());
    corpus.push_back(seq);
    const auto wave = decode(audio, cb);
    truth.add_fingerprint(wave, sentences[i]);
    items.push_back({"e" + std::to_string(i), sentences[i], wave, std::nullopt, std::nullopt});
  }
  // A reference too short to embed fails that record only.
  items.push_back({"short_ref", sentences[1], testutil::sine(200, 0.05), std::nullopt, std::nullopt});
  NGramOptions no;
  no.order = 12;
  const auto model = NGramModel::train(corpus, vocab.size(), vocab.end_token(), no);
  const SnrProxyScorer scorer;
  EvalOptions o;
  o.temperature = 0.0;
  o.seed = 5;
  const auto r = run_eval(items, model, vocab, cb, truth, scorer, o);
  REQUIRE(r.rows.size() == 1);
  CHECK(r.rows[0].wer_pct == 0.0);
  CHECK(r.rows[0].sim == doctest::Approx(1.0));
  CHECK(r.rows[0].mos >= 1.0);
  CHECK(r.rows[0].mos <= 5.0);
  CHECK(r.rows[0].r > 0.0);
  CHECK(r.metadata.records_total == 3);
  CHECK(r.metadata.records_failed == 1);
  REQUIRE(r.records[2].error);
  CHECK(r.records[0].hypothesis == sentences[0]);

  const auto again = run_eval(items, model, vocab, cb, truth, scorer, o);
  CHECK(without_timing(again) == without_timing(r));

  o.mode = SynthesisMode::kZeroShot;
  const auto zs = run_eval(std::span<const EvalItem>(items.data(), 1), model, vocab, cb, truth, scorer, o);
  CHECK(zs.metadata.records_failed == 1);
  CHECK(zs.rows.empty());
}
