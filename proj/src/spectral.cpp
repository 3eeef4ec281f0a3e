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

#include <algorithm>
#include "podforge/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace podforge {
namespace {

struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

// FFTW planning is not thread-safe; execution with the new-array interface is.
std::mutex& plan_mutex() {
  static std::mutex mu;
  return mu;
}

const PlanPair& plans_for(std::size_t n) {
  static std::map<std::size_t, PlanPair> cache;
  std::lock_guard lock(plan_mutex());
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<double> real(n);
  std::vector<Complex> spec(n / 2 + 1);
  auto* cplx = reinterpret_cast<fftw_complex*>(spec.data());
  const int size = static_cast<int>(n);
  PlanPair p;
  p.forward = fftw_plan_dft_r2c_1d(size, real.data(), cplx,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
  p.inverse = fftw_plan_dft_c2r_1d(size, cplx, real.data(),
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!p.forward || !p.inverse) throw std::runtime_error("fftw planning failed");
  return cache.emplace(n, p).first->second;
}

}  // namespace

const std::vector<double>& hann_window(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::unique_ptr<std::vector<double>>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) {
    slot = std::make_unique<std::vector<double>>(n);
    for (std::size_t i = 0; i < n; ++i) {
      (*slot)[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi *
                                        static_cast<double>(i) /
                                        static_cast<double>(n));
    }
  }
  return *slot;
}

RealFft::RealFft(std::size_t n) : n_(n) {
  const PlanPair& p = plans_for(n);
  forward_plan_ = p.forward;
  inverse_plan_ = p.inverse;
}

void RealFft::forward(std::span<const double> in, std::span<Complex> out) const {
  // FFTW's r2c does not modify its input but the signature is non-const.
  fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_plan_),
                       const_cast<double*>(in.data()),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

void RealFft::inverse(std::span<const Complex> in, std::span<double> out) const {
  // c2r destroys its input.
  std::vector<Complex> scratch(in.begin(), in.end());
  fftw_execute_dft_c2r(static_cast<fftw_plan>(inverse_plan_),
                       reinterpret_cast<fftw_complex*>(scratch.data()),
                       out.data());
}

Stft stft(std::span<const double> x, std::size_t window, std::size_t hop) {
  Stft s;
  s.bins = window / 2 + 1;
  s.frames = x.size() < window ? 0 : (x.size() - window) / hop + 1;
  s.data.resize(s.frames * s.bins);
  const auto& win = hann_window(window);
  const RealFft fft(window);
  std::vector<double> frame(window);
  for (std::size_t t = 0; t < s.frames; ++t) {
    const double* src = x.data() + t * hop;
    for (std::size_t i = 0; i < window; ++i) frame[i] = src[i] * win[i];
    fft.forward(frame, s.row(t));
  }
  return s;
}

std::vector<double> istft(const Stft& spec, std::size_t window, std::size_t hop,
                          std::size_t out_len) {
  std::vector<double> out(out_len, 0.0);
  std::vector<double> norm(out_len, 0.0);
  const auto& win = hann_window(window);
  const RealFft fft(window);
  std::vector<double> frame(window);
  const double scale = 1.0 / static_cast<double>(window);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    fft.inverse(spec.row(t), frame);
    const std::size_t start = t * hop;
    for (std::size_t i = 0; i < window && start + i < out_len; ++i) {
      out[start + i] += frame[i] * scale * win[i];
      norm[start + i] += win[i] * win[i];
    }
  }
  // The window sum tends to zero at both ends; flooring it keeps the edges a
  // plain fade instead of amplifying whatever the inverse left there.
  const double peak = norm.empty() ? 0.0 : *std::max_element(norm.begin(), norm.end());
  const double floor = 0.1 * peak;
  for (std::size_t i = 0; i < out_len; ++i) {
    out[i] = peak > 0.0 ? out[i] / std::max(norm[i], floor) : 0.0;
  }
  return out;
}

}  // namespace podforge
