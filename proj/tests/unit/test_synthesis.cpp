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

#include <chrono>

#include "doctest.h"
#include "podforge/synthesis.hpp"
#include "stub_backend.hpp"
#include "test_util.hpp"

using namespace podforge;

namespace {

MergedVocab template_vocab(const std::vector<std::string>& sentences) {
  std::vector<std::string> lines;
  for (const auto& s : sentences) lines.push_back(render_sft_text(s));
  return MergedVocab::build(lines);
}

// Stub reply: a run of audio ids keyed by the per-sentence seed.
nlohmann::json seeded_audio(const MergedVocab& v, const testutil::BackendCall& c,
                            std::size_t len = 6) {
  auto ids = nlohmann::json::array();
  for (std::size_t i = 0; i < len; ++i) ids.push_back(v.audio_base() + (c.seed * 31 + i) % 1024);
  ids.push_back(v.end_token());
  return ids;
}

}  // namespace

TEST_CASE("text normalization") {
  CHECK(normalize_text("hello world") == "Hello world.");
  CHECK(normalize_text("Hi!") == "Hi!");
  CHECK(normalize_text("  a  b  ") == "A b.");
  CHECK(normalize_text("one. two? three") == "One. Two? Three.");
  for (const char* s : {"hello world", "  a  b  ", "x! y", "Dr. who is here?", "ok"}) {
    CHECK(normalize_text(normalize_text(s)) == normalize_text(s));
  }
  CHECK_ERROR_CODE(normalize_text("   \n\t "), ErrorCode::kEmptyText);
}

TEST_CASE("sentence splitting") {
  CHECK(split_sentences("Hello. How are you?") == std::vector<std::string>{"Hello.", "How are you?"});
  CHECK(split_sentences("Dr. Smith speaks.") == std::vector<std::string>{"Dr.", "Smith speaks."});
  CHECK(split_sentences("One.") == std::vector<std::string>{"One."});
  CHECK(split_sentences("3.14 is pi.") == std::vector<std::string>{"3.14 is pi."});
}

TEST_CASE("concatenation with crossfade") {
  const auto a = testutil::sine(300, 1.0);
  const std::vector<Waveform> one{a};
  CHECK(concatenate(one) == a);
  const std::vector<Waveform> two{testutil::sine(300, 1.0), testutil::sine(500, 1.0)};
  const auto joined = concatenate(two);
  CHECK(std::abs(static_cast<long>(joined.samples.size()) - 31840) <= 2);
  const std::vector<Waveform> flat{testutil::constant(0.3f, 16000), testutil::constant(0.3f, 16000)};
  for (float v : concatenate(flat).samples) REQUIRE(v == 0.3f);
  std::vector<Waveform> mixed{testutil::sine(300, 0.1), testutil::sine(300, 0.1, 0.5, 8000)};
  CHECK_ERROR_CODE(concatenate(mixed), ErrorCode::kRateMismatch);
}

TEST_CASE("single SFT sentence on a deterministic model decodes its known tokens") {
  const std::string sentence = "Hello there.";
  const auto vocab = template_vocab({sentence});
  const AudioTokens audio = {5, 17, 17, 300, 42, 1000, 5, 9};
  TokenSequence seq = render_sft_prompt(vocab, sentence);
  const auto mapped = map_audio(vocab, audio);
  seq.insert(seq.end(), mapped.begin(), mapped.end());
  seq.push_back(vocab.end_token());
  NGramOptions o;
  o.order = 8;
  const std::vector<TokenSequence> corpus{seq};
  const auto model = NGramModel::train(corpus, vocab.size(), vocab.end_token(), o);
  const auto cb = testutil::pinned_codebook({});

  SynthesisRequest req;
  req.target_text = "hello there";
  SynthesisOptions opts;
  opts.temperature = 0.0;
  const auto r = synthesize(req, model, vocab, cb, opts);
  CHECK(r.audio == decode(audio, cb));
  REQUIRE(r.sentence_spans.size() == 1);
  CHECK(r.sentence_spans[0].text == sentence);
  CHECK(r.sentence_spans[0].start_s == 0.0);
  CHECK(r.sentence_spans[0].end_s == r.audio.duration_s());
  CHECK(r.t_syn == r.audio.duration_s());
  CHECK(r.first_token_audio == 1);
  CHECK_FALSE(r.truncated);
  CHECK_FALSE(r.degraded);
}

TEST_CASE("zero-shot preconditions") {
  const auto vocab = template_vocab({"a."});
  const UniformModel model(vocab.size(), vocab.end_token());
  const auto cb = testutil::pinned_codebook({});
  SynthesisRequest req;
  req.mode = SynthesisMode::kZeroShot;
  req.target_text = "Hi.";
  req.ref_text = "Reference.";
  CHECK_ERROR_CODE(synthesize(req, model, vocab, cb), ErrorCode::kPrecondition);
  req.ref_audio = testutil::sine(200, 1.0);
  req.ref_text = "  ";
  CHECK_ERROR_CODE(synthesize(req, model, vocab, cb), ErrorCode::kPrecondition);
}

TEST_CASE("zero-shot prompt carries the reference audio tokens") {
  const auto vocab = MergedVocab::build(std::vector<std::string>{"Reference words. Target."});
  const auto ref = testutil::sine(1000, 1.0);
  const auto ref_mfcc = testutil::steady_mfcc(ref);
  const auto cb = testutil::pinned_codebook({{77, ref_mfcc}});
  testutil::StubBackend stub([&](const testutil::BackendCall& c) {
    // Echo the last prompt id back as audio, then stop.
    return nlohmann::json::array({c.prompt_ids.back(), vocab.end_token()});
  });
  const ExternalModel model(stub.endpoint(), vocab.size(), vocab.end_token());
  SynthesisRequest req;
  req.mode = SynthesisMode::kZeroShot;
  req.target_text = "Target.";
  req.ref_text = "Reference words.";
  req.ref_audio = ref;
  const auto r = synthesize(req, model, vocab, cb);
  const AudioTokens expected{77};
  CHECK(r.audio == decode(expected, cb));
}

TEST_CASE("parallel sentences: speedup, identical audio, tiled spans") {
  const std::vector<std::string> sentences = {"One.", "Two.", "Three.", "Four."};
  const auto vocab = template_vocab(sentences);
  const auto cb = testutil::pinned_codebook({});
  testutil::StubBackend stub([&](const testutil::BackendCall& c) { return seeded_audio(vocab, c); },
                             std::chrono::milliseconds(100));
  BackendOptions bo;
  bo.pool_size = 4;
  const ExternalModel model(stub.endpoint(), vocab.size(), vocab.end_token(), bo);
  SynthesisRequest req;
  req.target_text = "One. Two. Three. Four.";
  req.seed = 11;
  SynthesisOptions serial;
  SynthesisOptions parallel;
  parallel.workers = 4;
  const auto r1 = synthesize(req, model, vocab, cb, serial);
  const auto r4 = synthesize(req, model, vocab, cb, parallel);
  MESSAGE("t_inf workers=1 " << r1.t_inf << " s, workers=4 " << r4.t_inf << " s");
  CHECK(r4.t_inf <= 0.5 * r1.t_inf);
  CHECK(r1.audio == r4.audio);
  CHECK(encode_wav(r1.audio) == encode_wav(r4.audio));

  REQUIRE(r1.sentence_spans.size() == 4);
  CHECK(r1.sentence_spans.front().start_s == 0.0);
  CHECK(r1.sentence_spans.back().end_s == doctest::Approx(r1.audio.duration_s()).epsilon(1e-12));
  for (std::size_t i = 1; i < 4; ++i) {
    CHECK(r1.sentence_spans[i].start_s == r1.sentence_spans[i - 1].end_s);
    CHECK(r1.sentence_spans[i].end_s > r1.sentence_spans[i].start_s);
    CHECK(r1.sentence_spans[i].text == sentences[i]);
  }

  // Per-sentence seeds are seed + index.
  req.seed = 12;
  CHECK(synthesize(req, model, vocab, cb, parallel).audio != r1.audio);
}

TEST_CASE("failed sentences degrade the result, all failing is an error") {
  const auto vocab = template_vocab({"A.", "B.", "C."});
  const auto cb = testutil::pinned_codebook({});
  const TokenId text_id = 1;
  testutil::StubBackend stub([&](const testutil::BackendCall& c) {
    if (c.seed % 3 == 1) return nlohmann::json::array({vocab.audio_base(), text_id});
    if (c.seed >= 100) return nlohmann::json::array({text_id});
    return seeded_audio(vocab, c);
  });
  const ExternalModel model(stub.endpoint(), vocab.size(), vocab.end_token());
  SynthesisRequest req;
  req.target_text = "A. B. C.";
  req.seed = 0;
  const auto r = synthesize(req, model, vocab, cb);
  CHECK(r.degraded);
  CHECK(r.sentence_spans.size() == 2);
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("sentence 1") != std::string::npos);
  CHECK(r.sentences_attempted == 3);

  req.seed = 102;  // seeds 102, 103, 104: every reply is a text id
  CHECK_ERROR_CODE(synthesize(req, model, vocab, cb), ErrorCode::kAllSentencesFailed);
}

TEST_CASE("missing end token marks the result truncated") {
  const auto vocab = template_vocab({"A."});
  const auto cb = testutil::pinned_codebook({});
  testutil::StubBackend stub([&](const testutil::BackendCall& c) {
    auto ids = nlohmann::json::array();
    for (std::size_t i = 0; i < c.max_new; ++i) ids.push_back(vocab.audio_base() + 3);
    return ids;
  });
  const ExternalModel model(stub.endpoint(), vocab.size(), vocab.end_token());
  SynthesisRequest req;
  req.target_text = "A.";
  req.max_seconds_per_sentence = 1.0;
  const auto r = synthesize(req, model, vocab, cb);
  CHECK(r.truncated);
  // Capped at 25 tokens: (25 - 1) * 640 + 1024 samples.
  CHECK(r.audio.samples.size() == 24 * 640 + 1024);
}

TEST_CASE("same request and seed give byte-identical audio") {
  const auto vocab = template_vocab({"Alpha beta.", "Gamma."});
  std::vector<TokenSequence> corpus;
  for (std::uint32_t k = 0; k < 5; ++k) {
    TokenSequence seq = render_sft_prompt(vocab, "Alpha beta.");
    for (std::uint32_t i = 0; i < 12; ++i) seq.push_back(vocab.audio_base() + (k * 13 + i * 7) % 1024);
    seq.push_back(vocab.end_token());
    corpus.push_back(seq);
  }
  const auto model = NGramModel::train(corpus, vocab.size(), vocab.end_token());
  const auto cb = testutil::pinned_codebook({});
  SynthesisRequest req;
  req.target_text = "Alpha beta. Gamma. Alpha beta.";
  req.seed = 5;
  req.max_seconds_per_sentence = 2.0;
  SynthesisOptions a, b;
  b.workers = 3;
  const auto ra = synthesize(req, model, vocab, cb, a);
  const auto rb = synthesize(req, model, vocab, cb, b);
  CHECK(encode_wav(ra.audio) == encode_wav(rb.audio));
  CHECK(encode_wav(synthesize(req, model, vocab, cb, a).audio) == encode_wav(ra.audio));
}
