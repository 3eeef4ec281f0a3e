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

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "podforge/protocol.hpp"

namespace podforge {

/// Next-token model over a merged vocabulary. Implementations must be safe
/// for concurrent calls.
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;

  // Returns only the new ids; stops after emitting end_token() or max_new ids.
  // temperature 0 selects the argmax, lowest id on ties.
  virtual TokenSequence generate(std::span<const TokenId> prompt, std::size_t max_new,
                                 std::uint64_t seed, double temperature) const = 0;
  virtual double log_prob(std::span<const TokenId> context, TokenId next) const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual TokenId end_token() const = 0;
  virtual std::string name() const = 0;
};

/// exp(-mean log_prob) over every transition (positions 1..n-1) of the corpus.
double perplexity(const SequenceModel& m, std::span<const TokenSequence> corpus);

class UniformModel final : public SequenceModel {
 public:
  UniformModel(std::size_t vocab_size, TokenId end) : vocab_(vocab_size), end_(end) {}

  TokenSequence generate(std::span<const TokenId> prompt, std::size_t max_new,
                         std::uint64_t seed, double temperature) const override;
  double log_prob(std::span<const TokenId> context, TokenId next) const override;
  std::size_t vocab_size() const override { return vocab_; }
  TokenId end_token() const override { return end_; }
  std::string name() const override { return "uniform"; }

 private:
  std::size_t vocab_;
  TokenId end_;
};

struct NGramOptions {
  std::size_t order = 3;
  double alpha = 0.4;
};

// Counts for every n-gram of length 1..order. A seen context mixes its
// relative frequencies with alpha times the next-shorter context's
// distribution; an unseen context defers entirely to the shorter one. The
// unigram level is add-one smoothed over the whole vocabulary.
class NGramModel final : public SequenceModel {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  static NGramModel train(std::span<const TokenSequence> corpus, std::size_t vocab_size,
                          TokenId end_token, const NGramOptions& options = {});

  TokenSequence generate(std::span<const TokenId> prompt, std::size_t max_new,
                         std::uint64_t seed, double temperature) const override;
  double log_prob(std::span<const TokenId> context, TokenId next) const override;
  std::size_t vocab_size() const override { return vocab_; }
  TokenId end_token() const override { return end_; }
  std::string name() const override { return "ngram-" + std::to_string(order_); }

  /// Next-token probabilities over the whole vocabulary.
  std::vector<double> distribution(std::span<const TokenId> context) const;
  /// Unnormalized stupid-backoff score: relative frequency at the longest
  /// matching order, times alpha per order backed off.
  double backoff_score(std::span<const TokenId> context, TokenId next) const;
  double unigram_prob(TokenId id) const;

  std::size_t order() const { return order_; }
  double alpha() const { return alpha_; }
  std::uint64_t count(std::span<const TokenId> ngram) const;

  std::vector<std::uint8_t> serialize() const;
  static NGramModel deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static NGramModel load(const std::filesystem::path& path);

 private:
  struct ContextStats {
    std::uint64_t total = 0;
    std::map<TokenId, std::uint64_t> next;
  };
  // Indexed by context length (0..order-1).
  using Level = std::map<std::vector<TokenId>, ContextStats>;

  NGramModel(std::size_t order, double alpha, std::size_t vocab, TokenId end);
  const ContextStats* find(std::size_t length, std::span<const TokenId> context) const;
  void add(std::span<const TokenId> ngram, std::uint64_t count);

  std::size_t order_;
  double alpha_;
  std::size_t vocab_;
  TokenId end_;
  std::vector<Level> levels_;
};

struct BackendOptions {
  std::chrono::milliseconds timeout{30'000};
  std::size_t pool_size = 4;
};

/// Remote model over HTTP: POST /generate {"prompt_ids","max_new","seed"}
/// answered by {"ids": [...]}. Requests beyond pool_size wait in FIFO order.
class ExternalModel final : public SequenceModel {
 public:
  ExternalModel(std::string endpoint, std::size_t vocab_size, TokenId end_token,
                BackendOptions options = {});
  ~ExternalModel() override;

  TokenSequence generate(std::span<const TokenId> prompt, std::size_t max_new,
                         std::uint64_t seed, double temperature) const override;
  // Not part of the wire contract.
  double log_prob(std::span<const TokenId> context, TokenId next) const override;
  std::size_t vocab_size() const override { return vocab_; }
  TokenId end_token() const override { return end_; }
  std::string name() const override { return "external"; }

  /// True when GET /health (or any HTTP answer) comes back.
  bool reachable() const;

 private:
  struct Gate;
  std::string host_;
  int port_;
  std::size_t vocab_;
  TokenId end_;
  BackendOptions options_;
  std::unique_ptr<Gate> gate_;
};

/// Free-function form of the backend call.
TokenSequence external_generate(const std::string& endpoint, std::span<const TokenId> prompt,
                                std::size_t max_new, std::uint64_t seed,
                                std::size_t vocab_size, BackendOptions options = {});

}  // namespace podforge
