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

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace podforge {

using Complex = std::complex<double>;

/// Periodic Hann window.
const std::vector<double>& hann_window(std::size_t n);

/// Real-input FFT of a fixed size n. Instances are cheap handles over a
/// process-wide plan cache and are safe to use from several threads.
class RealFft {
 public:
  explicit RealFft(std::size_t n);

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  // in: n values, out: n/2+1 values.
  void forward(std::span<const double> in, std::span<Complex> out) const;
  // Unnormalized inverse: forward followed by inverse scales by n.
  void inverse(std::span<const Complex> in, std::span<double> out) const;

 private:
  std::size_t n_;
  void* forward_plan_;
  void* inverse_plan_;
};

/// Short-time spectrum, frames x bins row-major.
struct Stft {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<Complex> data;

  std::span<Complex> row(std::size_t t) { return {data.data() + t * bins, bins}; }
  std::span<const Complex> row(std::size_t t) const {
    return {data.data() + t * bins, bins};
  }
};

// Hann-windowed analysis; frame t starts at t * hop.
Stft stft(std::span<const double> x, std::size_t window, std::size_t hop);

// Weighted overlap-add with the same Hann window, normalized by the summed
// squared window, floored at a tenth of its peak so the edges fade out.
std::vector<double> istft(const Stft& spec, std::size_t window, std::size_t hop,
                          std::size_t out_len);

}  // namespace podforge
