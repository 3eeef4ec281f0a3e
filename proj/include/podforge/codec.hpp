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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "podforge/audio.hpp"

namespace podforge {

inline constexpr std::size_t kCodebookSize = 1024;

using AudioTokens = std::vector<std::uint32_t>;

/// Vector quantizer over MFCC-13 frames plus one mean magnitude spectrum per
/// entry for reconstruction. Values are held at float precision so a saved
/// and reloaded codebook behaves bit-identically.
class Codebook {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  Codebook(std::size_t size, std::vector<float> centroids,
           std::vector<float> recon_spectra);

  std::size_t size() const { return size_; }
  static constexpr std::size_t dims() { return kMfccDims; }
  static constexpr std::size_t spectrum_bins() { return kSpectrumBins; }
  static constexpr int sample_rate() { return kCanonicalRate; }
  static constexpr double token_rate() { return kTokenRate; }

  std::span<const float> centroid(std::size_t j) const {
    return {centroids_.data() + j * kMfccDims, kMfccDims};
  }
  std::span<const float> recon_spectrum(std::size_t j) const {
    return {recon_.data() + j * kSpectrumBins, kSpectrumBins};
  }

  // Nearest centroid by Euclidean distance, lowest index on ties.
  std::uint32_t nearest(std::span<const double> frame, double* sq_dist = nullptr) const;

  std::vector<std::uint8_t> serialize() const;
  static Codebook deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static Codebook load(const std::filesystem::path& path);

  friend bool operator==(const Codebook&, const Codebook&) = default;

 private:
  std::size_t size_;
  std::vector<float> centroids_;
  std::vector<float> recon_;
};

struct KMeansOptions {
  std::size_t k = kCodebookSize;
  std::uint64_t seed = 0;
  std::size_t max_iterations = 50;
  double tolerance = 1e-4;  // relative objective change
  std::size_t workers = 1;
};

struct KMeansReport {
  std::vector<double> objective;  // after each assignment step
  std::vector<std::size_t> cluster_sizes;
  std::size_t iterations = 0;
  std::size_t reseeded = 0;
};

/// k-means++ seeded Lloyd iterations over pooled MFCC frames. Callers are
/// expected to have applied the decoder-quality MOS filter already.
Codebook train_codebook(std::span<const Waveform> corpus, const KMeansOptions& options,
                        KMeansReport* report = nullptr);

AudioTokens encode(const Waveform& w, const Codebook& cb);
AudioTokens encode_frames(const FeatureMatrix& mfcc, const Codebook& cb);

struct DecodeOptions {
  std::size_t griffin_lim_iterations = 32;
  std::uint64_t phase_seed = 0x5eed'9a5e'0f'17ULL;
};

/// Mean-spectrum lookup per token followed by Griffin-Lim phase recovery.
Waveform decode(std::span<const std::uint32_t> tokens, const Codebook& cb,
                const DecodeOptions& options = {});

/// Mean squared distance from each MFCC frame to its assigned centroid.
double quantization_error(const Waveform& w, const Codebook& cb);

}  // namespace podforge
