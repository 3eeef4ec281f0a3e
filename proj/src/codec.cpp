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

#include "podforge/codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <unordered_set>

#include "podforge/error.hpp"
#include "podforge/parallel.hpp"
#include "podforge/random.hpp"
#include "podforge/spectral.hpp"

namespace podforge {
namespace {

constexpr char kMagic[8] = {'P', 'F', 'C', 'O', 'D', 'E', 'C', '\0'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  static_assert(std::endian::native == std::endian::little);
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) {
    throw Error(ErrorCode::kMalformedContainer, "codebook file truncated");
  }
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

double sq_distance(std::span<const double> a, std::span<const float> b, double bound) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - static_cast<double>(b[i]);
    acc += d * d;
    if (acc > bound) return acc;
  }
  return acc;
}

struct FrameHash {
  std::size_t operator()(const std::vector<double>& v) const {
    std::uint64_t h = 1469598103934665603ULL;
    for (double d : v) {
      h ^= std::bit_cast<std::uint64_t>(d);
      h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

// Pooled training frames: MFCC rows for clustering and float magnitude rows
// for the reconstruction spectra.
struct Pool {
  std::size_t n = 0;
  std::vector<double> mfcc;
  std::vector<float> magnitude;

  std::span<const double> row(std::size_t i) const {
    return {mfcc.data() + i * kMfccDims, kMfccDims};
  }
};

Pool pool_frames(std::span<const Waveform> corpus) {
  Pool p;
  for (const Waveform& w : corpus) {
    if (w.sample_rate != kCanonicalRate) {
      throw Error(ErrorCode::kPrecondition, "codec training audio must be 16 kHz");
    }
    if (w.samples.size() < kWindow) continue;
    const SpectralFrames f = extract_spectrum_and_mfcc(w);
    p.mfcc.insert(p.mfcc.end(), f.mfcc.data.begin(), f.mfcc.data.end());
    for (double m : f.magnitude.data) p.magnitude.push_back(static_cast<float>(m));
    p.n += f.mfcc.frames;
  }
  return p;
}

class Assigner {
 public:
  Assigner(const Pool& pool, std::size_t k, std::size_t workers)
      : pool_(pool), k_(k), workers_(workers), labels_(pool.n), dists_(pool.n) {}

  void run(const std::vector<float>& centroids) {
    parallel_for(pool_.n, workers_, [&](std::size_t i) {
      const auto x = pool_.row(i);
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t arg = 0;
      for (std::size_t j = 0; j < k_; ++j) {
        const double d = sq_distance(
            x, std::span<const float>(centroids.data() + j * kMfccDims, kMfccDims), best);
        if (d < best) {
          best = d;
          arg = static_cast<std::uint32_t>(j);
        }
      }
      labels_[i] = arg;
      dists_[i] = best;
    });
  }

  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> s(k_, 0);
    for (auto l : labels_) ++s[l];
    return s;
  }

  double objective() const {
    double j = 0.0;
    for (double d : dists_) j += d;
    return j;
  }

  const std::vector<std::uint32_t>& labels() const { return labels_; }
  const std::vector<double>& dists() const { return dists_; }

 private:
  const Pool& pool_;
  std::size_t k_;
  std::size_t workers_;
  std::vector<std::uint32_t> labels_;
  std::vector<double> dists_;
};

void set_centroid(std::vector<float>& centroids, std::size_t j, std::span<const double> x) {
  for (std::size_t d = 0; d < kMfccDims; ++d) {
    centroids[j * kMfccDims + d] = static_cast<float>(x[d]);
  }
}

// Moves every empty centroid onto the frame farthest from its own centroid,
// drawn from clusters that can spare a member, then reassigns. Repeats until
// no cluster is empty. Each move strictly lowers the objective.
std::size_t assign_without_empties(Assigner& assigner, const Pool& pool,
                                   std::vector<float>& centroids, std::size_t k) {
  std::size_t moved = 0;
  for (int round = 0; round < 64; ++round) {
    assigner.run(centroids);
    auto sizes = assigner.sizes();
    std::vector<std::size_t> empty;
    for (std::size_t j = 0; j < k; ++j) {
      if (sizes[j] == 0) empty.push_back(j);
    }
    if (empty.empty()) return moved;
    std::vector<std::size_t> order(pool.n);
    for (std::size_t i = 0; i < pool.n; ++i) order[i] = i;
    const auto& dists = assigner.dists();
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dists[a] > dists[b]; });
    std::size_t cursor = 0;
    for (std::size_t j : empty) {
      while (cursor < order.size()) {
        const std::size_t i = order[cursor++];
        const auto owner = assigner.labels()[i];
        if (sizes[owner] >= 2 && dists[i] > 0.0) {
          --sizes[owner];
          sizes[j] = 1;
          set_centroid(centroids, j, pool.row(i));
          ++moved;
          break;
        }
      }
    }
  }
  throw Error(ErrorCode::kInsufficientData, "could not eliminate empty clusters");
}

std::vector<float> kmeans_plus_plus(const Pool& pool, std::size_t k, Rng& rng) {
  std::vector<float> centroids(k * kMfccDims);
  std::vector<double> nearest(pool.n, std::numeric_limits<double>::infinity());
  std::size_t chosen = rng.index(pool.n);
  for (std::size_t j = 0; j < k; ++j) {
    set_centroid(centroids, j, pool.row(chosen));
    const std::span<const float> c(centroids.data() + j * kMfccDims, kMfccDims);
    double total = 0.0;
    for (std::size_t i = 0; i < pool.n; ++i) {
      nearest[i] = std::min(nearest[i], sq_distance(pool.row(i), c, nearest[i]));
      total += nearest[i];
    }
    if (j + 1 == k) break;
    if (!(total > 0.0)) {
      throw Error(ErrorCode::kInsufficientData, "fewer distinct frames than codebook entries");
    }
    double target = rng.uniform() * total;
    chosen = pool.n;
    for (std::size_t i = 0; i < pool.n; ++i) {
      if (nearest[i] <= 0.0) continue;
      chosen = i;
      target -= nearest[i];
      if (target < 0.0) break;
    }
  }
  return centroids;
}

}  // namespace

Codebook::Codebook(std::size_t size, std::vector<float> centroids,
                   std::vector<float> recon_spectra)
    : size_(size), centroids_(std::move(centroids)), recon_(std::move(recon_spectra)) {
  if (size_ == 0 || centroids_.size() != size_ * kMfccDims ||
      recon_.size() != size_ * kSpectrumBins) {
    throw Error(ErrorCode::kInvalidArgument, "codebook matrix shapes do not match its size");
  }
  for (float v : centroids_) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "non-finite centroid");
  }
  for (float v : recon_) {
    if (!std::isfinite(v) || v < 0.0f) {
      throw Error(ErrorCode::kInvalidArgument, "reconstruction spectra must be finite and >= 0");
    }
  }
}

std::uint32_t Codebook::nearest(std::span<const double> frame, double* sq_dist) const {
  double best = std::numeric_limits<double>::infinity();
  std::uint32_t arg = 0;
  for (std::size_t j = 0; j < size_; ++j) {
    const double d = sq_distance(frame, centroid(j), best);
    if (d < best) {
      best = d;
      arg = static_cast<std::uint32_t>(j);
    }
  }
  if (sq_dist) *sq_dist = best;
  return arg;
}

std::vector<std::uint8_t> Codebook::serialize() const {
  std::vector<std::uint8_t> out(kMagic, kMagic + sizeof(kMagic));
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(size_));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(kMfccDims));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(kSpectrumBins));
  for (float v : centroids_) put(out, v);
  for (float v : recon_) put(out, v);
  return out;
}

Codebook Codebook::deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kMalformedContainer, "not a codebook file");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kFormatVersion) {
    throw Error(ErrorCode::kUnsupportedEncoding,
                "codebook format version " + std::to_string(version));
  }
  const auto k = take<std::uint32_t>(bytes, pos);
  const auto dims = take<std::uint32_t>(bytes, pos);
  const auto bins = take<std::uint32_t>(bytes, pos);
  if (dims != kMfccDims || bins != kSpectrumBins || k == 0) {
    throw Error(ErrorCode::kMalformedContainer, "unexpected codebook dimensions");
  }
  if (bytes.size() - pos != static_cast<std::size_t>(k) * (dims + bins) * sizeof(float)) {
    throw Error(ErrorCode::kMalformedContainer, "codebook payload size mismatch");
  }
  std::vector<float> centroids(static_cast<std::size_t>(k) * dims);
  std::vector<float> recon(static_cast<std::size_t>(k) * bins);
  for (auto& v : centroids) v = take<float>(bytes, pos);
  for (auto& v : recon) v = take<float>(bytes, pos);
  return Codebook(k, std::move(centroids), std::move(recon));
}

void Codebook::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoFailure, "short write to " + path.string());
}

Codebook Codebook::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

Codebook train_codebook(std::span<const Waveform> corpus, const KMeansOptions& options,
                        KMeansReport* report) {
  const std::size_t k = options.k;
  if (k == 0) throw Error(ErrorCode::kPrecondition, "k must be positive");
  const Pool pool = pool_frames(corpus);
  if (pool.n < k) {
    throw Error(ErrorCode::kInsufficientData,
                std::to_string(pool.n) + " frames for " + std::to_string(k) + " entries");
  }
  {
    std::unordered_set<std::vector<double>, FrameHash> distinct;
    for (std::size_t i = 0; i < pool.n && distinct.size() < k; ++i) {
      const auto r = pool.row(i);
      distinct.emplace(r.begin(), r.end());
    }
    if (distinct.size() < k) {
      throw Error(ErrorCode::kInsufficientData,
                  "only " + std::to_string(distinct.size()) + " distinct frames for " +
                      std::to_string(k) + " entries");
    }
  }

  Rng rng(options.seed);
  std::vector<float> centroids = kmeans_plus_plus(pool, k, rng);
  Assigner assigner(pool, k, options.workers);
  KMeansReport local;
  std::vector<double> sums(k * kMfccDims);
  for (std::size_t iter = 0; iter < std::max<std::size_t>(options.max_iterations, 1); ++iter) {
    local.reseeded += assign_without_empties(assigner, pool, centroids, k);
    const double objective = assigner.objective();
    local.objective.push_back(objective);
    local.iterations = iter + 1;
    if (iter > 0) {
      const double prev = local.objective[iter - 1];
      const double change = prev > 0.0 ? (prev - objective) / prev : 0.0;
      if (change < options.tolerance) break;
    }
    if (iter + 1 == options.max_iterations) break;
    std::fill(sums.begin(), sums.end(), 0.0);
    const auto sizes = assigner.sizes();
    for (std::size_t i = 0; i < pool.n; ++i) {
      const auto l = assigner.labels()[i];
      const auto x = pool.row(i);
      for (std::size_t d = 0; d < kMfccDims; ++d) sums[l * kMfccDims + d] += x[d];
    }
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t d = 0; d < kMfccDims; ++d) {
        centroids[j * kMfccDims + d] =
            static_cast<float>(sums[j * kMfccDims + d] / static_cast<double>(sizes[j]));
      }
    }
  }

  // The last assignment is consistent with the final centroids, so encoding
  // a training frame reproduces its label here.
  const auto sizes = assigner.sizes();
  std::vector<double> recon_sum(k * kSpectrumBins, 0.0);
  for (std::size_t i = 0; i < pool.n; ++i) {
    const auto l = assigner.labels()[i];
    const float* m = pool.magnitude.data() + i * kSpectrumBins;
    for (std::size_t b = 0; b < kSpectrumBins; ++b) recon_sum[l * kSpectrumBins + b] += m[b];
  }
  std::vector<float> recon(k * kSpectrumBins);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t b = 0; b < kSpectrumBins; ++b) {
      recon[j * kSpectrumBins + b] =
          static_cast<float>(recon_sum[j * kSpectrumBins + b] / static_cast<double>(sizes[j]));
    }
  }
  local.cluster_sizes = sizes;
  if (report) *report = std::move(local);
  return Codebook(k, std::move(centroids), std::move(recon));
}

AudioTokens encode_frames(const FeatureMatrix& mfcc, const Codebook& cb) {
  if (mfcc.dims != kMfccDims) {
    throw Error(ErrorCode::kInvalidArgument, "encode expects MFCC-13 frames");
  }
  AudioTokens ids(mfcc.frames);
  for (std::size_t t = 0; t < mfcc.frames; ++t) ids[t] = cb.nearest(mfcc.row(t));
  return ids;
}

AudioTokens encode(const Waveform& w, const Codebook& cb) {
  if (w.sample_rate != kCanonicalRate) {
    throw Error(ErrorCode::kPrecondition, "encode expects 16 kHz audio");
  }
  return encode_frames(extract_features(w, FeatureKind::kMfcc), cb);
}

double quantization_error(const Waveform& w, const Codebook& cb) {
  const FeatureMatrix mfcc = extract_features(w, FeatureKind::kMfcc);
  double total = 0.0;
  for (std::size_t t = 0; t < mfcc.frames; ++t) {
    double d = 0.0;
    cb.nearest(mfcc.row(t), &d);
    total += d;
  }
  return total / static_cast<double>(mfcc.frames);
}

Waveform decode(std::span<const std::uint32_t> tokens, const Codebook& cb,
                const DecodeOptions& options) {
  Waveform out;
  out.sample_rate = kCanonicalRate;
  for (auto id : tokens) {
    if (id >= cb.size()) {
      throw Error(ErrorCode::kInvalidToken, "audio token " + std::to_string(id) +
                                                " outside codebook of " +
                                                std::to_string(cb.size()));
    }
  }
  if (tokens.empty()) return out;

  const std::size_t frames = tokens.size();
  const std::size_t out_len = (frames - 1) * kHop + kWindow;
  std::vector<double> magnitude(frames * kSpectrumBins);
  for (std::size_t t = 0; t < frames; ++t) {
    const auto spec = cb.recon_spectrum(tokens[t]);
    std::copy(spec.begin(), spec.end(), magnitude.begin() + t * kSpectrumBins);
  }

  Stft current;
  current.frames = frames;
  current.bins = kSpectrumBins;
  current.data.resize(frames * kSpectrumBins);
  Rng rng(options.phase_seed);
  for (std::size_t i = 0; i < current.data.size(); ++i) {
    current.data[i] = std::polar(magnitude[i], rng.uniform(-std::numbers::pi, std::numbers::pi));
  }

  std::vector<double> signal;
  for (std::size_t it = 0; it < options.griffin_lim_iterations; ++it) {
    signal = istft(current, kWindow, kHop, out_len);
    const Stft analysed = stft(signal, kWindow, kHop);
    for (std::size_t i = 0; i < current.data.size(); ++i) {
      const double a = std::abs(analysed.data[i]);
      current.data[i] = a > 0.0 ? analysed.data[i] * (magnitude[i] / a)
                                : Complex(magnitude[i], 0.0);
    }
  }
  signal = istft(current, kWindow, kHop, out_len);

  out.samples.resize(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    out.samples[i] = static_cast<float>(std::clamp(signal[i], -1.0, 1.0));
  }
  return out;
}

}  // namespace podforge
