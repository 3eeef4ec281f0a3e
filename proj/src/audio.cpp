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

#include "podforge/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

#include "podforge/error.hpp"
#include "podforge/spectral.hpp"

namespace podforge {
namespace {

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

struct MelBank {
  // Per filter: first bin and weights over consecutive bins.
  std::vector<std::size_t> start;
  std::vector<std::vector<double>> weights;
};

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// 40 triangular filters spanning 0-8000 Hz on the 513-bin grid.
const MelBank& mel_bank() {
  static const MelBank bank = [] {
    MelBank b;
    const double lo = hz_to_mel(0.0);
    const double hi = hz_to_mel(kCanonicalRate / 2.0);
    std::vector<double> edges(kMelFilters + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) /
                                    static_cast<double>(kMelFilters + 1));
    }
    const double bin_hz = static_cast<double>(kCanonicalRate) / kWindow;
    for (std::size_t m = 0; m < kMelFilters; ++m) {
      const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
      std::size_t first = kSpectrumBins;
      std::vector<double> w;
      for (std::size_t k = 0; k < kSpectrumBins; ++k) {
        const double f = static_cast<double>(k) * bin_hz;
        double v = 0.0;
        if (f > left && f < right) {
          v = f <= centre ? (f - left) / (centre - left)
                          : (right - f) / (right - centre);
        }
        if (v > 0.0) {
          if (first == kSpectrumBins) first = k;
          w.resize(k - first + 1, 0.0);
          w[k - first] = v;
        }
      }
      if (first == kSpectrumBins) first = 0;
      b.start.push_back(first);
      b.weights.push_back(std::move(w));
    }
    return b;
  }();
  return bank;
}

// Orthonormal DCT-II rows 1..13 over the 40 log-mel energies.
const std::vector<double>& dct_matrix() {
  static const std::vector<double> m = [] {
    std::vector<double> d(kMfccDims * kMelFilters);
    const double n = static_cast<double>(kMelFilters);
    for (std::size_t k = 0; k < kMfccDims; ++k) {
      const double coef = static_cast<double>(k + 1);
      for (std::size_t j = 0; j < kMelFilters; ++j) {
        d[k * kMelFilters + j] =
            std::sqrt(2.0 / n) *
            std::cos(std::numbers::pi * coef * (static_cast<double>(j) + 0.5) / n);
      }
    }
    return d;
  }();
  return m;
}

void mfcc_into(std::span<const double> magnitude, std::span<double> out) {
  const MelBank& bank = mel_bank();
  double log_mel[kMelFilters];
  for (std::size_t m = 0; m < kMelFilters; ++m) {
    double e = 0.0;
    const auto& w = bank.weights[m];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double mag = magnitude[bank.start[m] + i];
      e += w[i] * mag * mag;
    }
    log_mel[m] = std::log(e + 1e-10);
  }
  const auto& dct = dct_matrix();
  for (std::size_t k = 0; k < kMfccDims; ++k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < kMelFilters; ++j) acc += dct[k * kMelFilters + j] * log_mel[j];
    out[k] = acc;
  }
}

void require_framable(const Waveform& w) {
  if (w.samples.size() < kWindow) {
    throw Error(ErrorCode::kTooShort,
                "need at least " + std::to_string(kWindow) + " samples, got " +
                    std::to_string(w.samples.size()));
  }
}

}  // namespace

std::size_t frame_count(std::size_t n_samples, std::size_t window, std::size_t hop) {
  if (window == 0 || hop == 0 || n_samples < window) return 0;
  return (n_samples - window) / hop + 1;
}

Waveform decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorCode::kMalformedContainer, "missing RIFF/WAVE header");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size() && std::memcmp(chunk, "data", 4) != 0) {
      throw Error(ErrorCode::kMalformedContainer, "truncated chunk");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw Error(ErrorCode::kMalformedContainer, "short fmt chunk");
      const std::uint8_t* f = bytes.data() + body;
      std::uint16_t format = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      bits = read_u16(f + 14);
      if (format == kFormatExtensible && size >= 26) format = read_u16(f + 24);
      if (format != kFormatPcm) {
        throw Error(ErrorCode::kUnsupportedEncoding,
                    "format tag " + std::to_string(format) + " is not PCM");
      }
      if (bits != 16) {
        throw Error(ErrorCode::kUnsupportedEncoding,
                    std::to_string(bits) + "-bit samples; only 16-bit PCM is supported");
      }
      if (channels != 1 && channels != 2) {
        throw Error(ErrorCode::kUnsupportedEncoding,
                    std::to_string(channels) + " channels; only mono or stereo");
      }
      if (rate == 0) throw Error(ErrorCode::kMalformedContainer, "zero sample rate");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw Error(ErrorCode::kMalformedContainer, "data before fmt");
      // Tolerate writers that leave a stale size on a truncated stream.
      const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
      const std::size_t frame_bytes = 2u * channels;
      const std::size_t n = avail / frame_bytes;
      Waveform w;
      w.sample_rate = static_cast<int>(rate);
      w.samples.resize(n);
      const std::uint8_t* d = bytes.data() + body;
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          const auto v = static_cast<std::int16_t>(read_u16(d + (i * channels + c) * 2));
          acc += static_cast<double>(v) / 32768.0;
        }
        w.samples[i] = static_cast<float>(acc / channels);
      }
      return w;
    }
    pos = body + size + (size & 1u);
  }
  throw Error(ErrorCode::kMalformedContainer, have_fmt ? "no data chunk" : "no fmt chunk");
}

Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

std::vector<std::uint8_t> encode_wav(const Waveform& w) {
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (float s : w.samples) {
    const double scaled = std::nearbyint(static_cast<double>(s) * 32768.0);
    const auto q = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  return out;
}

void save_wav(const Waveform& w, const std::filesystem::path& path) {
  const auto bytes = encode_wav(w);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoFailure, "short write to " + path.string());
}

Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0 || w.sample_rate <= 0) {
    throw Error(ErrorCode::kPrecondition, "sample rates must be positive");
  }
  if (target_rate == w.sample_rate) return w;
  Waveform out;
  out.sample_rate = target_rate;
  const std::size_t n = w.samples.size();
  if (n == 0) return out;
  const double ratio = static_cast<double>(w.sample_rate) / target_rate;
  const auto m = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * target_rate / w.sample_rate));
  out.samples.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto k = static_cast<std::size_t>(pos);
    if (k + 1 >= n) {
      out.samples[i] = w.samples[n - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(k);
    const double a = w.samples[k];
    const double b = w.samples[k + 1];
    out.samples[i] = static_cast<float>(a + (b - a) * frac);
  }
  return out;
}

SpectralFrames extract_spectrum_and_mfcc(const Waveform& w) {
  require_framable(w);
  std::vector<double> x(w.samples.begin(), w.samples.end());
  const Stft spec = stft(x, kWindow, kHop);
  SpectralFrames out;
  out.magnitude.kind = FeatureKind::kMagnitudeSpectrum;
  out.magnitude.frames = spec.frames;
  out.magnitude.dims = kSpectrumBins;
  out.magnitude.data.resize(spec.frames * kSpectrumBins);
  out.mfcc.kind = FeatureKind::kMfcc;
  out.mfcc.frames = spec.frames;
  out.mfcc.dims = kMfccDims;
  out.mfcc.data.resize(spec.frames * kMfccDims);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    auto mag = out.magnitude.row(t);
    const auto bins = spec.row(t);
    for (std::size_t k = 0; k < kSpectrumBins; ++k) mag[k] = std::abs(bins[k]);
    mfcc_into(mag, out.mfcc.row(t));
  }
  const double rate = static_cast<double>(w.sample_rate) / kHop;
  out.magnitude.frame_rate = rate;
  out.mfcc.frame_rate = rate;
  return out;
}

FeatureMatrix extract_features(const Waveform& w, FeatureKind kind) {
  auto both = extract_spectrum_and_mfcc(w);
  return kind == FeatureKind::kMfcc ? std::move(both.mfcc) : std::move(both.magnitude);
}

std::vector<double> mfcc_from_magnitude(std::span<const double> magnitude) {
  if (magnitude.size() != kSpectrumBins) {
    throw Error(ErrorCode::kInvalidArgument, "magnitude spectrum must have 513 bins");
  }
  std::vector<double> out(kMfccDims);
  mfcc_into(magnitude, out);
  return out;
}

std::vector<double> rms_energy(const Waveform& w, std::size_t hop, std::size_t window) {
  if (window == 0 || hop == 0) throw Error(ErrorCode::kPrecondition, "window and hop must be >= 1");
  if (w.samples.size() < window) {
    throw Error(ErrorCode::kTooShort, "fewer samples than one window");
  }
  const std::size_t t_count = frame_count(w.samples.size(), window, hop);
  std::vector<double> out(t_count);
  for (std::size_t t = 0; t < t_count; ++t) {
    double acc = 0.0;
    const float* p = w.samples.data() + t * hop;
    for (std::size_t i = 0; i < window; ++i) acc += static_cast<double>(p[i]) * p[i];
    out[t] = std::sqrt(acc / static_cast<double>(window));
  }
  return out;
}

void normalize_samples(Waveform& w) {
  for (float& s : w.samples) {
    if (!std::isfinite(s)) s = 0.0f;
    s = std::clamp(s, -1.0f, 1.0f);
  }
}

}  // namespace podforge
