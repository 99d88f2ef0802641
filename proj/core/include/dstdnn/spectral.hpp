// Copyright 2026 The dstdnn Authors.
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

#include "dstdnn/tensor.hpp"

namespace dstdnn {

// Real token tensor, shape batch x channels x frames: the dataflow unit of
// the whole network.
struct FeatureMap {
  Tensor data;              // [B, C, T]
  double frame_shift = 0.01;  // seconds

  std::size_t batch() const { return data.size(0); }
  std::size_t channels() const { return data.size(1); }
  std::size_t frames() const { return data.size(2); }
};

// Channel-wise half spectrum of a real signal: bins = floor(T/2)+1 complex
// values per channel, stored as [B, C, bins, 2]. Bin 0 (and the Nyquist bin
// for even T) carries no imaginary part when produced from a real signal.
struct HalfSpectrum {
  Tensor data;  // [B, C, bins, 2]
  std::size_t origin_length = 0;

  std::size_t batch() const { return data.size(0); }
  std::size_t channels() const { return data.size(1); }
  std::size_t bins() const { return data.size(2); }
};

// One learnable transform-domain filter: a complex gain per channel per bin.
struct GlobalFilter {
  Tensor data;  // [C, bins, 2]

  std::size_t channels() const { return data.size(0); }
  std::size_t bins() const { return data.size(1); }

  static GlobalFilter all_pass(std::size_t channels, std::size_t bins) {
    GlobalFilter f{Tensor({channels, bins, 2})};
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t k = 0; k < bins; ++k) f.data.at3(c, k, 0) = 1.0;
    }
    return f;
  }
};

// Channel-wise forward real FFT.
HalfSpectrum rfft_channels(const FeatureMap& x);

// Inverse of rfft_channels under Hermitian extension; output is real.
FeatureMap irfft_channels(const HalfSpectrum& s);

// Spectral modulation: irfft(f .* rfft(x)). Filters whose bin count does
// not match floor(T/2)+1 are first resampled with interpolate_filter.
FeatureMap gf_forward(const FeatureMap& x, const GlobalFilter& f);

// Spatial-domain ground truth for gf_forward: per channel, the direct
// O(T^2) circular convolution out[m] = sum_n x[n] * w[(m - n) mod T].
// w_g: [C, T].
FeatureMap circular_conv_oracle(const FeatureMap& x, const Tensor& w_g);

// Resamples a filter to the bin grid of a different token length. Real and
// imaginary parts are interpolated linearly and independently on sample
// points placed uniformly over normalized frequency [0, 0.5].
GlobalFilter interpolate_filter(const GlobalFilter& f,
                                std::size_t target_length);

// Forward transform of a spatial kernel row, used to convert circular
// convolution weights into a GlobalFilter. w_g: [C, T].
GlobalFilter filter_from_kernel(const Tensor& w_g);

}  // namespace dstdnn
