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

namespace podforge {

inline constexpr int kCanonicalRate = 16000;
// 64 ms analysis window and 40 ms hop at 16 kHz: exactly 25 frames per second.
inline constexpr std::size_t kWindow = 1024;
inline constexpr std::size_t kHop = 640;
inline constexpr double kTokenRate = 25.0;
inline constexpr std::size_t kSpectrumBins = kWindow / 2 + 1;
inline constexpr std::size_t kMelFilters = 40;
inline constexpr std::size_t kMfccDims = 13;

/// Mono PCM audio, samples in [-1, 1].
struct Waveform {
  std::vector<float> samples;
  int sample_rate = kCanonicalRate;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate
                           : 0.0;
  }
  bool empty() const { return samples.empty(); }

  friend bool operator==(const Waveform&, const Waveform&) = default;
};

enum class FeatureKind { kMagnitudeSpectrum, kMfcc };

/// T x D row-major frame matrix.
struct FeatureMatrix {
  std::size_t frames = 0;
  std::size_t dims = 0;
  std::vector<double> data;
  double frame_rate = kTokenRate;
  FeatureKind kind = FeatureKind::kMfcc;

  std::span<const double> row(std::size_t t) const {
    return {data.data() + t * dims, dims};
  }
  std::span<double> row(std::size_t t) { return {data.data() + t * dims, dims}; }
};

/// floor((n - window) / hop) + 1, or 0 when n < window.
std::size_t frame_count(std::size_t n_samples, std::size_t window = kWindow,
                        std::size_t hop = kHop);

// RIFF/WAVE, 16-bit PCM, mono or stereo (stereo is averaged to mono).
Waveform load_wav(const std::filesystem::path& path);
Waveform decode_wav(std::span<const std::uint8_t> bytes);
// Always writes 16-bit PCM mono.
void save_wav(const Waveform& w, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_wav(const Waveform& w);

/// Linear-interpolation resampler.
Waveform resample(const Waveform& w, int target_rate);

/// Frames a canonical-rate waveform with the fixed 1024/640 window.
FeatureMatrix extract_features(const Waveform& w, FeatureKind kind);

/// Both feature kinds from one pass over the frames.
struct SpectralFrames {
  FeatureMatrix magnitude;
  FeatureMatrix mfcc;
};
SpectralFrames extract_spectrum_and_mfcc(const Waveform& w);

/// MFCC-13 of a single one-sided magnitude spectrum (kSpectrumBins values).
std::vector<double> mfcc_from_magnitude(std::span<const double> magnitude);

/// Per-frame RMS using the same framing rule as extract_features.
std::vector<double> rms_energy(const Waveform& w, std::size_t hop = kHop,
                               std::size_t window = kWindow);

/// Clamps to [-1, 1] and replaces non-finite samples with 0.
void normalize_samples(Waveform& w);

}  // namespace podforge
