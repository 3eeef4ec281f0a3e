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

#include "podforge/model.hpp"

#include <httplib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <mutex>
#include <nlohmann/json.hpp>

#include "podforge/error.hpp"
#include "podforge/random.hpp"

namespace podforge {
namespace {

constexpr char kMagic[8] = {'P', 'F', 'N', 'G', 'R', 'A', 'M', '\0'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  static_assert(std::endian::native == std::endian::little);
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) {
    throw Error(ErrorCode::kMalformedContainer, "model file truncated");
  }
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

// Temperature 0 is argmax with the lowest id winning ties.
TokenId pick(const std::vector<double>& probs, double temperature, Rng& rng) {
  if (temperature <= 0.0) {
    TokenId best = 0;
    for (TokenId i = 1; i < probs.size(); ++i) {
      if (probs[i] > probs[best]) best = i;
    }
    return best;
  }
  std::vector<double> weights(probs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    weights[i] = probs[i] > 0.0 ? std::pow(probs[i], 1.0 / temperature) : 0.0;
    total += weights[i];
  }
  double target = rng.uniform() * total;
  TokenId last = 0;
  for (TokenId i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last = i;
    target -= weights[i];
    if (target < 0.0) return i;
  }
  return last;
}

struct Endpoint {
  std::string host;
  int port = 80;
};

Endpoint parse_endpoint(std::string s) {
  if (s.starts_with("http://")) s = s.substr(7);
  while (!s.empty() && s.back() == '/') s.pop_back();
  Endpoint e;
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) {
    e.host = s;
  } else {
    e.host = s.substr(0, colon);
    try {
      e.port = std::stoi(s.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "bad backend port in '" + s + "'");
    }
  }
  if (e.host.empty()) throw Error(ErrorCode::kInvalidArgument, "empty backend host");
  return e;
}

TokenSequence call_backend(const Endpoint& ep, std::span<const TokenId> prompt,
                           std::size_t max_new, std::uint64_t seed, std::size_t vocab_size,
                           std::chrono::milliseconds timeout) {
  httplib::Client client(ep.host, ep.port);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  nlohmann::ordered_json body;
  body["prompt_ids"] = std::vector<TokenId>(prompt.begin(), prompt.end());
  body["max_new"] = max_new;
  body["seed"] = seed;
  const auto started = std::chrono::steady_clock::now();
  auto res = client.Post("/generate", body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Connection || err == httplib::Error::ConnectionTimeout) {
      throw Error(ErrorCode::kBackendUnreachable,
                  ep.host + ":" + std::to_string(ep.port) + " (" + httplib::to_string(err) + ")");
    }
    if (std::chrono::steady_clock::now() - started >= timeout) {
      throw Error(ErrorCode::kTimeout, "backend did not answer within " +
                                           std::to_string(timeout.count()) + " ms");
    }
    throw Error(ErrorCode::kInvalidBackendOutput, httplib::to_string(err));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kInvalidBackendOutput, "HTTP status " + std::to_string(res->status));
  }
  TokenSequence ids;
  try {
    const auto j = nlohmann::json::parse(res->body);
    for (const auto& v : j.at("ids")) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0 ||
          static_cast<std::uint64_t>(v.get<std::int64_t>()) >= vocab_size) {
        throw Error(ErrorCode::kInvalidBackendOutput, "id " + v.dump() + " outside vocabulary");
      }
      ids.push_back(static_cast<TokenId>(v.get<std::int64_t>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidBackendOutput, std::string("malformed response: ") + e.what());
  }
  if (ids.size() > max_new) ids.resize(max_new);
  return ids;
}

}  // namespace

double perplexity(const SequenceModel& m, std::span<const TokenSequence> corpus) {
  if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "perplexity of an empty corpus");
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& seq : corpus) {
    for (std::size_t i = 1; i < seq.size(); ++i) {
      total += m.log_prob(std::span<const TokenId>(seq.data(), i), seq[i]);
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorCode::kEmptyCorpus, "corpus has no transitions");
  return std::exp(-total / static_cast<double>(n));
}

TokenSequence UniformModel::generate(std::span<const TokenId>, std::size_t max_new,
                                     std::uint64_t seed, double temperature) const {
  Rng rng(seed);
  const std::vector<double> probs(vocab_, 1.0 / static_cast<double>(vocab_));
  TokenSequence out;
  while (out.size() < max_new) {
    out.push_back(pick(probs, temperature, rng));
    if (out.back() == end_) break;
  }
  return out;
}

double UniformModel::log_prob(std::span<const TokenId>, TokenId next) const {
  if (next >= vocab_) throw Error(ErrorCode::kInvalidToken, "id outside vocabulary");
  return -std::log(static_cast<double>(vocab_));
}

NGramModel::NGramModel(std::size_t order, double alpha, std::size_t vocab, TokenId end)
    : order_(order), alpha_(alpha), vocab_(vocab), end_(end), levels_(order) {
  if (order_ < 1) throw Error(ErrorCode::kInvalidArgument, "n-gram order must be >= 1");
  if (!(alpha_ > 0.0)) throw Error(ErrorCode::kInvalidArgument, "backoff alpha must be > 0");
  if (vocab_ == 0 || end_ >= vocab_) throw Error(ErrorCode::kInvalidArgument, "bad vocabulary size");
}

void NGramModel::add(std::span<const TokenId> ngram, std::uint64_t count) {
  auto& stats = levels_[ngram.size() - 1][std::vector<TokenId>(ngram.begin(), ngram.end() - 1)];
  stats.total += count;
  stats.next[ngram.back()] += count;
}

NGramModel NGramModel::train(std::span<const TokenSequence> corpus, std::size_t vocab_size,
                             TokenId end_token, const NGramOptions& options) {
  if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "n-gram training corpus is empty");
  NGramModel m(options.order, options.alpha, vocab_size, end_token);
  for (const auto& seq : corpus) {
    for (TokenId id : seq) {
      if (id >= vocab_size) throw Error(ErrorCode::kInvalidToken, "training id outside vocabulary");
    }
    for (std::size_t i = 0; i < seq.size(); ++i) {
      for (std::size_t n = 1; n <= m.order_ && n <= i + 1; ++n) {
        m.add(std::span<const TokenId>(seq.data() + i + 1 - n, n), 1);
      }
    }
  }
  return m;
}

const NGramModel::ContextStats* NGramModel::find(std::size_t length,
                                                 std::span<const TokenId> context) const {
  const auto& level = levels_[length];
  auto it = level.find(std::vector<TokenId>(context.end() - static_cast<std::ptrdiff_t>(length),
                                            context.end()));
  return it == level.end() ? nullptr : &it->second;
}

double NGramModel::unigram_prob(TokenId id) const {
  const auto* root = levels_[0].empty() ? nullptr : &levels_[0].begin()->second;
  std::uint64_t c = 0, total = 0;
  if (root) {
    total = root->total;
    auto it = root->next.find(id);
    if (it != root->next.end()) c = it->second;
  }
  return (static_cast<double>(c) + 1.0) / (static_cast<double>(total) + static_cast<double>(vocab_));
}

std::vector<double> NGramModel::distribution(std::span<const TokenId> context) const {
  std::vector<double> p(vocab_);
  for (TokenId i = 0; i < vocab_; ++i) p[i] = unigram_prob(i);
  for (std::size_t len = 1; len < order_ && len <= context.size(); ++len) {
    const ContextStats* s = find(len, context);
    if (!s) break;
    const double denom = static_cast<double>(s->total) + alpha_;
    for (double& v : p) v = alpha_ * v / denom;
    for (const auto& [id, c] : s->next) p[id] += static_cast<double>(c) / denom;
  }
  return p;
}

double NGramModel::log_prob(std::span<const TokenId> context, TokenId next) const {
  if (next >= vocab_) throw Error(ErrorCode::kInvalidToken, "id outside vocabulary");
  double p = unigram_prob(next);
  for (std::size_t len = 1; len < order_ && len <= context.size(); ++len) {
    const ContextStats* s = find(len, context);
    if (!s) break;
    auto it = s->next.find(next);
    const double c = it == s->next.end() ? 0.0 : static_cast<double>(it->second);
    p = (c + alpha_ * p) / (static_cast<double>(s->total) + alpha_);
  }
  return std::log(p);
}

double NGramModel::backoff_score(std::span<const TokenId> context, TokenId next) const {
  double scale = 1.0;
  for (std::size_t len = std::min(order_ - 1, context.size()); len >= 1; --len) {
    if (const ContextStats* s = find(len, context)) {
      auto it = s->next.find(next);
      if (it != s->next.end()) {
        return scale * static_cast<double>(it->second) / static_cast<double>(s->total);
      }
    }
    scale *= alpha_;
  }
  return scale * unigram_prob(next);
}

std::uint64_t NGramModel::count(std::span<const TokenId> ngram) const {
  if (ngram.empty() || ngram.size() > order_) return 0;
  const auto& level = levels_[ngram.size() - 1];
  auto it = level.find(std::vector<TokenId>(ngram.begin(), ngram.end() - 1));
  if (it == level.end()) return 0;
  auto jt = it->second.next.find(ngram.back());
  return jt == it->second.next.end() ? 0 : jt->second;
}

TokenSequence NGramModel::generate(std::span<const TokenId> prompt, std::size_t max_new,
                                   std::uint64_t seed, double temperature) const {
  Rng rng(seed);
  std::vector<TokenId> history(prompt.begin(), prompt.end());
  TokenSequence out;
  while (out.size() < max_new) {
    const std::size_t keep = std::min(history.size(), order_ - 1);
    const auto probs = distribution(std::span<const TokenId>(history).last(keep));
    const TokenId next = pick(probs, temperature, rng);
    out.push_back(next);
    history.push_back(next);
    if (next == end_) break;
  }
  return out;
}

std::vector<std::uint8_t> NGramModel::serialize() const {
  std::vector<std::uint8_t> out(kMagic, kMagic + sizeof(kMagic));
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(order_));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(vocab_));
  put<std::uint32_t>(out, end_);
  put<double>(out, alpha_);
  std::uint64_t entries = 0;
  for (const auto& level : levels_) {
    for (const auto& [ctx, stats] : level) entries += stats.next.size();
  }
  put<std::uint64_t>(out, entries);
  // Entry: length, ids..., count. Ordered by length, then context, then id.
  for (const auto& level : levels_) {
    for (const auto& [ctx, stats] : level) {
      for (const auto& [id, c] : stats.next) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(ctx.size() + 1));
        for (TokenId t : ctx) put<std::uint32_t>(out, t);
        put<std::uint32_t>(out, id);
        put<std::uint64_t>(out, c);
      }
    }
  }
  return out;
}

NGramModel NGramModel::deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kMalformedContainer, "not an n-gram model file");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kFormatVersion) {
    throw Error(ErrorCode::kUnsupportedEncoding, "model format version " + std::to_string(version));
  }
  const auto order = take<std::uint32_t>(bytes, pos);
  const auto vocab = take<std::uint32_t>(bytes, pos);
  const auto end = take<std::uint32_t>(bytes, pos);
  const auto alpha = take<double>(bytes, pos);
  NGramModel m(order, alpha, vocab, end);
  const auto entries = take<std::uint64_t>(bytes, pos);
  std::vector<TokenId> gram;
  for (std::uint64_t e = 0; e < entries; ++e) {
    const auto n = take<std::uint32_t>(bytes, pos);
    if (n == 0 || n > order) throw Error(ErrorCode::kMalformedContainer, "bad n-gram length");
    gram.resize(n);
    for (auto& t : gram) {
      t = take<std::uint32_t>(bytes, pos);
      if (t >= vocab) throw Error(ErrorCode::kMalformedContainer, "n-gram id outside vocabulary");
    }
    const auto c = take<std::uint64_t>(bytes, pos);
    if (c == 0) throw Error(ErrorCode::kMalformedContainer, "zero count entry");
    m.add(gram, c);
  }
  if (pos != bytes.size()) throw Error(ErrorCode::kMalformedContainer, "trailing bytes in model file");
  return m;
}

void NGramModel::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoFailure, "short write to " + path.string());
}

NGramModel NGramModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

struct ExternalModel::Gate {
  std::mutex mu;
  std::condition_variable cv;
  std::size_t capacity;
  std::size_t in_flight = 0;
  std::uint64_t next_ticket = 0;
  std::uint64_t serving = 0;

  explicit Gate(std::size_t cap) : capacity(std::max<std::size_t>(cap, 1)) {}

  void acquire() {
    std::unique_lock lock(mu);
    const std::uint64_t ticket = next_ticket++;
    cv.wait(lock, [&] { return ticket == serving && in_flight < capacity; });
    ++serving;
    ++in_flight;
    cv.notify_all();
  }

  void release() {
    std::lock_guard lock(mu);
    --in_flight;
    cv.notify_all();
  }
};

ExternalModel::ExternalModel(std::string endpoint, std::size_t vocab_size, TokenId end_token,
                             BackendOptions options)
    : vocab_(vocab_size), end_(end_token), options_(options),
      gate_(std::make_unique<Gate>(options.pool_size)) {
  const Endpoint ep = parse_endpoint(std::move(endpoint));
  host_ = ep.host;
  port_ = ep.port;
}

ExternalModel::~ExternalModel() = default;

TokenSequence ExternalModel::generate(std::span<const TokenId> prompt, std::size_t max_new,
                                      std::uint64_t seed, double) const {
  gate_->acquire();
  struct Release {
    Gate* g;
    ~Release() { g->release(); }
  } release{gate_.get()};
  return call_backend(Endpoint{host_, port_}, prompt, max_new, seed, vocab_, options_.timeout);
}

double ExternalModel::log_prob(std::span<const TokenId>, TokenId) const {
  throw Error(ErrorCode::kUnsupported, "external backends do not expose log probabilities");
}

bool ExternalModel::reachable() const {
  httplib::Client client(host_, port_);
  client.set_connection_timeout(1, 0);
  client.set_read_timeout(1, 0);
  return static_cast<bool>(client.Get("/health"));
}

TokenSequence external_generate(const std::string& endpoint, std::span<const TokenId> prompt,
                                std::size_t max_new, std::uint64_t seed, std::size_t vocab_size,
                                BackendOptions options) {
  return call_backend(parse_endpoint(endpoint), prompt, max_new, seed, vocab_size,
                      options.timeout);
}

}  // namespace podforge
