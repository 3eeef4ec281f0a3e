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
#include <numeric>
#include <random>

#include "doctest.h"
#include "podforge/model.hpp"
#include "stub_backend.hpp"
#include "test_util.hpp"

using namespace podforge;

namespace {

constexpr TokenId kA = 1, kB = 2, kEnd = 0;

std::vector<TokenSequence> repeated(const TokenSequence& s, std::size_t n) {
  return std::vector<TokenSequence>(n, s);
}

// Sequences from a sparse first-order Markov chain over `v` symbols.
std::vector<TokenSequence> markov_corpus(std::size_t n, std::size_t len, std::size_t v,
                                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<TokenSequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    TokenSequence s{static_cast<TokenId>(1 + rng() % (v - 1))};
    while (s.size() < len) {
      const TokenId prev = s.back();
      const TokenId next = static_cast<TokenId>(1 + (prev * 7 + (rng() % 3)) % (v - 1));
      s.push_back(next);
    }
    s.push_back(0);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("degenerate corpus") {
  const auto corpus = repeated({kA, kB, kEnd}, 1000);
  const auto m = NGramModel::train(corpus, 5, kEnd);
  const TokenSequence a{kA};
  CHECK(m.backoff_score(a, kB) == 1.0);
  CHECK(std::exp(m.log_prob(a, kB)) > 0.999);
  CHECK(m.generate(a, 10, 1, 0.0) == TokenSequence{kB, kEnd});
  CHECK(m.generate(a, 10, 99, 0.0) == TokenSequence{kB, kEnd});
  CHECK(perplexity(m, corpus) < 1.1);
  CHECK(perplexity(m, corpus) == perplexity(m, corpus));
  CHECK(m.count(TokenSequence{kA, kB}) == 1000);
  CHECK(m.count(TokenSequence{kA, kB, kEnd}) == 1000);
  CHECK(m.count(TokenSequence{kB, kA}) == 0);
}

TEST_CASE("unseen context backs off to the unigram with factor alpha") {
  const auto m = NGramModel::train(repeated({kA, kB, kEnd}, 10), 5, kEnd);
  const TokenSequence unseen{4};
  for (TokenId next = 0; next < 5; ++next) {
    CHECK(m.backoff_score(unseen, next) == doctest::Approx(0.4 * m.unigram_prob(next)).epsilon(1e-15));
  }
  // Without any context the unigram stands alone.
  CHECK(m.backoff_score(TokenSequence{}, kA) == m.unigram_prob(kA));
}

TEST_CASE("distributions sum to one") {
  const auto corpus = markov_corpus(50, 30, 40, 1);
  NGramOptions o;
  o.order = 3;
  const auto m = NGramModel::train(corpus, 40, 0, o);
  std::mt19937 rng(2);
  for (int i = 0; i < 100; ++i) {
    TokenSequence ctx(rng() % 4);
    for (auto& t : ctx) t = rng() % 40;
    double total = 0;
    for (TokenId next = 0; next < 40; ++next) total += std::exp(m.log_prob(ctx, next));
    REQUIRE(std::abs(total - 1.0) <= 1e-9);
    const auto d = m.distribution(ctx);
    REQUIRE(std::abs(std::accumulate(d.begin(), d.end(), 0.0) - 1.0) <= 1e-9);
  }
}

TEST_CASE("generation caps, determinism and argmax invariance") {
  // END never occurs, so only the cap stops generation.
  const auto m = NGramModel::train(repeated({1, 2, 1, 2, 1, 2}, 5), 5, 0);
  CHECK(m.generate(TokenSequence{1}, 3, 0, 0.0).size() == 3);
  CHECK(m.generate(TokenSequence{1}, 3, 0, 1.0).size() <= 3);

  const auto corpus = markov_corpus(40, 25, 30, 5);
  const auto a = NGramModel::train(corpus, 30, 0);
  const TokenSequence prompt{3, 4};
  CHECK(a.generate(prompt, 50, 17, 1.0) == a.generate(prompt, 50, 17, 1.0));
  std::vector<TokenSequence> triple;
  for (int k = 0; k < 3; ++k) triple.insert(triple.end(), corpus.begin(), corpus.end());
  const auto b = NGramModel::train(triple, 30, 0);
  for (TokenId start = 1; start < 30; ++start) {
    const TokenSequence p{start};
    REQUIRE(a.generate(p, 40, 0, 0.0) == b.generate(p, 40, 0, 0.0));
  }
}

TEST_CASE("perplexity: uniform closed form and trained below uniform") {
  const UniformModel u(37, 0);
  const auto corpus = markov_corpus(30, 20, 37, 9);
  CHECK(perplexity(u, corpus) == doctest::Approx(37.0).epsilon(1e-12));
  const auto held = markov_corpus(30, 20, 37, 10);
  const auto m = NGramModel::train(corpus, 37, 0);
  const double pm = perplexity(m, held);
  MESSAGE("held-out perplexity " << pm << " vs uniform 37");
  CHECK(pm < perplexity(u, held));
  CHECK_ERROR_CODE(perplexity(m, std::vector<TokenSequence>{}), ErrorCode::kEmptyCorpus);
}

TEST_CASE("model file round trip") {
  testutil::TempDir dir;
  const auto m = NGramModel::train(markov_corpus(20, 20, 25, 3), 25, 0);
  m.save(dir / "m.bin");
  const auto back = NGramModel::load(dir / "m.bin");
  CHECK(back.serialize() == m.serialize());
  CHECK(back.order() == m.order());
  CHECK(back.log_prob(TokenSequence{3, 5}, 7) == m.log_prob(TokenSequence{3, 5}, 7));
  testutil::write_file(dir / "junk.bin", "definitely not a model");
  CHECK_ERROR_CODE(NGramModel::load(dir / "junk.bin"), ErrorCode::kMalformedContainer);
  CHECK_ERROR_CODE(NGramModel::train(std::vector<TokenSequence>{{9}}, 5, 0),
                   ErrorCode::kInvalidToken);
}

TEST_CASE("external backend") {
  SUBCASE("loopback reply is accepted") {
    testutil::StubBackend stub([](const testutil::BackendCall&) {
      return nlohmann::json::array({1, 0});
    });
    const auto ids = external_generate(stub.endpoint(), TokenSequence{3}, 10, 4, 8);
    CHECK(ids == TokenSequence{1, 0});
    const ExternalModel m(stub.endpoint(), 8, 0);
    CHECK(m.reachable());
    CHECK(m.generate(TokenSequence{3}, 10, 4, 1.0) == TokenSequence{1, 0});
    CHECK_ERROR_CODE(m.log_prob(TokenSequence{3}, 1), ErrorCode::kUnsupported);
  }
  SUBCASE("seed and prompt reach the backend") {
    testutil::StubBackend stub([](const testutil::BackendCall& c) {
      return nlohmann::json::array({c.seed % 8, c.prompt_ids.size(), c.max_new});
    });
    CHECK(external_generate(stub.endpoint(), TokenSequence{1, 2, 3}, 5, 13, 8) ==
          TokenSequence{5, 3, 5});
  }
  SUBCASE("out-of-vocabulary id is invalid output") {
    testutil::StubBackend stub([](const testutil::BackendCall&) {
      return nlohmann::json::array({1000000000});
    });
    CHECK_ERROR_CODE(external_generate(stub.endpoint(), TokenSequence{1}, 4, 0, 8),
                     ErrorCode::kInvalidBackendOutput);
  }
  SUBCASE("malformed reply is invalid output") {
    testutil::StubBackend stub([](const testutil::BackendCall&) { return nlohmann::json("x"); });
    CHECK_ERROR_CODE(external_generate(stub.endpoint(), TokenSequence{1}, 4, 0, 8),
                     ErrorCode::kInvalidBackendOutput);
  }
  SUBCASE("slow backend times out") {
    testutil::StubBackend stub([](const testutil::BackendCall&) {
      return nlohmann::json::array({1});
    }, std::chrono::milliseconds(600));
    BackendOptions o;
    o.timeout = std::chrono::milliseconds(150);
    CHECK_ERROR_CODE(external_generate(stub.endpoint(), TokenSequence{1}, 4, 0, 8, o),
                     ErrorCode::kTimeout);
  }
  SUBCASE("nobody listening is unreachable, quickly") {
    const auto endpoint = "127.0.0.1:" + std::to_string(testutil::closed_port());
    BackendOptions o;
    o.timeout = std::chrono::milliseconds(500);
    const auto t0 = std::chrono::steady_clock::now();
    CHECK_ERROR_CODE(external_generate(endpoint, TokenSequence{1}, 4, 0, 8, o),
                     ErrorCode::kBackendUnreachable);
    CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(2));
  }
}
