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

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <system_error>
#include <vector>

#include <unistd.h>

#include "podforge/audio.hpp"
#include "podforge/codec.hpp"
#include "podforge/error.hpp"

// Asserts that `expr` throws podforge::Error carrying `code_`.
#define CHECK_ERROR_CODE(expr, code_)                                  \
  do {                                                                 \
    bool thrown_ = false;                                              \
    try {                                                              \
      (void)(expr);                                                    \
    } catch (const podforge::Error& e_) {                              \
      thrown_ = true;                                                  \
      CHECK_MESSAGE(e_.code() == (code_), std::string(e_.what()));     \
    }                                                                  \
    CHECK_MESSAGE(thrown_, #expr " did not throw");                    \
  } while (0)

namespace testutil {

/// Fresh directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("podforge_test_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline podforge::Waveform sine(double hz, double seconds, double amplitude = 0.5,
                               int rate = podforge::kCanonicalRate) {
  podforge::Waveform w;
  w.sample_rate = rate;
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    w.samples[i] = static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * hz * i / rate));
  }
  return w;
}

inline podforge::Waveform silence(std::size_t n, int rate = podforge::kCanonicalRate) {
  podforge::Waveform w;
  w.sample_rate = rate;
  w.samples.assign(n, 0.0f);
  return w;
}

inline podforge::Waveform constant(float value, std::size_t n) {
  podforge::Waveform w;
  w.samples.assign(n, value);
  return w;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  f << s;
}

/// 1024-entry codebook whose only reachable entries are the given ones; all
/// other centroids sit far away. Each entry gets its own comb-shaped
/// reconstruction spectrum so different ids decode to different audio.
struct PinnedEntry {
  std::uint32_t id;
  std::vector<double> mfcc;
};

inline podforge::Codebook pinned_codebook(const std::vector<PinnedEntry>& entries,
                                          std::size_t size = podforge::kCodebookSize) {
  std::vector<float> centroids(size * podforge::kMfccDims);
  for (std::size_t j = 0; j < size; ++j) {
    for (std::size_t d = 0; d < podforge::kMfccDims; ++d) {
      centroids[j * podforge::kMfccDims + d] = 1.0e6f + static_cast<float>(j);
    }
  }
  for (const auto& e : entries) {
    for (std::size_t d = 0; d < podforge::kMfccDims; ++d) {
      centroids[e.id * podforge::kMfccDims + d] = static_cast<float>(e.mfcc[d]);
    }
  }
  std::vector<float> recon(size * podforge::kSpectrumBins);
  for (std::size_t j = 0; j < size; ++j) {
    for (std::size_t b = 0; b < podforge::kSpectrumBins; ++b) {
      recon[j * podforge::kSpectrumBins + b] =
          (b % (3 + j % 29) == 0) ? 4.0f + static_cast<float>(j % 7) : 0.05f;
    }
  }
  return podforge::Codebook(size, std::move(centroids), std::move(recon));
}

/// MFCC vector shared by every frame of a stationary signal.
inline std::vector<double> steady_mfcc(const podforge::Waveform& w) {
  const auto m = podforge::extract_features(w, podforge::FeatureKind::kMfcc);
  const auto row = m.row(m.frames / 2);
  return {row.begin(), row.end()};
}

}  // namespace testutil
