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

#include "dstdnn/spectral.hpp"

#include <vector>

#include "dstdnn/autodiff.hpp"
#include "dstdnn/fft.hpp"

namespace dstdnn {

HalfSpectrum rfft_channels(const FeatureMap& x) {
  const Tensor& t = x.data;
  if (t.rank() != 3) throw ShapeError("rfft_channels: expected [B,C,T]");
  const std::size_t frames = t.size(2);
  if (frames < 2) throw InvalidInputError("rfft_channels: need T >= 2");
  if (!t.all_finite()) throw NumericError("rfft_channels: non-finite input");
  const std::size_t bins = fft::rfft_bins(frames);
  HalfSpectrum s;
  s.origin_length = frames;
  s.data = Tensor({t.size(0), t.size(1), bins, 2});
  std::vector<fft::cplx> spec(bins);
  for (std::size_t b = 0; b < t.size(0); ++b) {
    for (std::size_t c = 0; c < t.size(1); ++c) {
      fft::rfft(t.data() + (b * t.size(1) + c) * frames, frames, spec.data());
      for (std::size_t k = 0; k < bins; ++k) {
        s.data.at4(b, c, k, 0) = spec[k].real();
        s.data.at4(b, c, k, 1) = spec[k].imag();
      }
    }
  }
  return s;
}

FeatureMap irfft_channels(const HalfSpectrum& s) {
  const Tensor& t = s.data;
  if (t.rank() != 4 || t.size(3) != 2) {
    throw ShapeError("irfft_channels: expected [B,C,bins,2]");
  }
  if (fft::rfft_bins(s.origin_length) != t.size(2)) {
    throw ShapeError("irfft_channels: bin count does not match origin length");
  }
  FeatureMap x;
  x.data = Tensor({t.size(0), t.size(1), s.origin_length});
  std::vector<fft::cplx> spec(t.size(2));
  for (std::size_t b = 0; b < t.size(0); ++b) {
    for (std::size_t c = 0; c < t.size(1); ++c) {
      for (std::size_t k = 0; k < t.size(2); ++k) {
        spec[k] = fft::cplx(t.at4(b, c, k, 0), t.at4(b, c, k, 1));
      }
      fft::irfft(spec.data(), s.origin_length,
                 x.data.data() + (b * t.size(1) + c) * s.origin_length);
    }
  }
  return x;
}

FeatureMap gf_forward(const FeatureMap& x, const GlobalFilter& f) {
  if (f.data.rank() != 3 || f.data.size(2) != 2) {
    throw ShapeError("gf_forward: filter must be [C,bins,2]");
  }
  if (f.channels() != x.channels()) {
    throw ShapeError("gf_forward: filter/input channel mismatch");
  }
  const std::size_t bins = fft::rfft_bins(x.frames());
  const GlobalFilter* filt = &f;
  GlobalFilter resampled;
  if (f.bins() != bins) {
    resampled = interpolate_filter(f, x.frames());
    filt = &resampled;
  }
  HalfSpectrum s = rfft_channels(x);
  for (std::size_t b = 0; b < s.batch(); ++b) {
    for (std::size_t c = 0; c < s.channels(); ++c) {
      for (std::size_t k = 0; k < bins; ++k) {
        const double ar = s.data.at4(b, c, k, 0);
        const double ai = s.data.at4(b, c, k, 1);
        const double br = filt->data.at3(c, k, 0);
        const double bi = filt->data.at3(c, k, 1);
        s.data.at4(b, c, k, 0) = ar * br - ai * bi;
        s.data.at4(b, c, k, 1) = ar * bi + ai * br;
      }
    }
  }
  FeatureMap out = irfft_channels(s);
  out.frame_shift = x.frame_shift;
  return out;
}

FeatureMap circular_conv_oracle(const FeatureMap& x, const Tensor& w_g) {
  if (w_g.rank() != 2) throw ShapeError("circular_conv_oracle: w_g is [C,T]");
  if (w_g.size(0) != x.channels() || w_g.size(1) != x.frames()) {
    throw ShapeError("circular_conv_oracle: kernel length mismatch");
  }
  const std::size_t frames = x.frames();
  FeatureMap out;
  out.frame_shift = x.frame_shift;
  out.data = Tensor(x.data.shape());
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t c = 0; c < x.channels(); ++c) {
      const double* xr = x.data.data() + (b * x.channels() + c) * frames;
      const double* wr = w_g.data() + c * frames;
      double* orow = out.data.data() + (b * x.channels() + c) * frames;
      for (std::size_t m = 0; m < frames; ++m) {
        double s = 0.0;
        // (m - n) mod T without % on a signed value: split at n = m.
        for (std::size_t n = 0; n <= m; ++n) s += xr[n] * wr[m - n];
        for (std::size_t n = m + 1; n < frames; ++n) {
          s += xr[n] * wr[m + frames - n];
        }
        orow[m] = s;
      }
    }
  }
  return out;
}

GlobalFilter interpolate_filter(const GlobalFilter& f,
                                std::size_t target_length) {
  if (target_length < 2) {
    throw InvalidInputError("interpolate_filter: target length < 2");
  }
  const std::size_t new_bins = fft::rfft_bins(target_length);
  // Shares the resampling rule with the differentiable network path.
  Graph g;
  Var v = g.input(f.data);
  Var out = g.interp_bins(v, new_bins);
  return GlobalFilter{g.val(out)};
}

GlobalFilter filter_from_kernel(const Tensor& w_g) {
  if (w_g.rank() != 2) throw ShapeError("filter_from_kernel: w_g is [C,T]");
  const std::size_t ch = w_g.size(0), frames = w_g.size(1);
  const std::size_t bins = fft::rfft_bins(frames);
  GlobalFilter f{Tensor({ch, bins, 2})};
  std::vector<fft::cplx> spec(bins);
  for (std::size_t c = 0; c < ch; ++c) {
    fft::rfft(w_g.data() + c * frames, frames, spec.data());
    for (std::size_t k = 0; k < bins; ++k) {
      f.data.at3(c, k, 0) = spec[k].real();
      f.data.at3(c, k, 1) = spec[k].imag();
    }
  }
  return f;
}

}  // namespace dstdnn
