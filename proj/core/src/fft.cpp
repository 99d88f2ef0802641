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

#include "dstdnn/fft.hpp"

#include <cmath>

#include "dstdnn/common.hpp"

namespace dstdnn::fft {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Iterative Cooley-Tukey, n a power of two.
void transform_pow2(std::vector<cplx>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * kPi / static_cast<double>(len) *
                       (inverse ? 1.0 : -1.0);
    const cplx wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        cplx u = a[i + j];
        cplx v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n);
    for (cplx& x : a) x *= scale;
  }
}

// Bluestein's algorithm for arbitrary n, expressed as one circular
// convolution of power-of-two length >= 2n-1.
void transform_bluestein(std::vector<cplx>& a, bool inverse) {
  const std::size_t n = a.size();
  const std::size_t m = next_pow2(2 * n - 1);
  const double sign = inverse ? 1.0 : -1.0;

  std::vector<cplx> chirp(n);
  for (std::size_t i = 0; i < n; ++i) {
    // i^2 mod 2n avoids precision loss in the angle for large i.
    const std::size_t i2 = static_cast<std::size_t>(
        (static_cast<unsigned long long>(i) * i) % (2 * n));
    const double ang = kPi * static_cast<double>(i2) / static_cast<double>(n);
    chirp[i] = cplx(std::cos(ang), sign * std::sin(ang));
  }

  std::vector<cplx> u(m, cplx(0.0, 0.0));
  std::vector<cplx> v(m, cplx(0.0, 0.0));
  for (std::size_t i = 0; i < n; ++i) u[i] = a[i] * chirp[i];
  v[0] = std::conj(chirp[0]);
  for (std::size_t i = 1; i < n; ++i) {
    v[i] = std::conj(chirp[i]);
    v[m - i] = std::conj(chirp[i]);
  }

  transform_pow2(u, false);
  transform_pow2(v, false);
  for (std::size_t i = 0; i < m; ++i) u[i] *= v[i];
  transform_pow2(u, true);

  for (std::size_t i = 0; i < n; ++i) a[i] = u[i] * chirp[i];
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n);
    for (cplx& x : a) x *= scale;
  }
}

}  // namespace

void transform(std::vector<cplx>& a, bool inverse) {
  if (a.empty()) throw InvalidInputError("fft: empty input");
  if (a.size() == 1) return;
  if (is_pow2(a.size())) {
    transform_pow2(a, inverse);
  } else {
    transform_bluestein(a, inverse);
  }
}

void rfft(const double* x, std::size_t n, cplx* out) {
  if (n < 1) throw InvalidInputError("rfft: empty input");
  std::vector<cplx> buf(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = cplx(x[i], 0.0);
  transform(buf, false);
  const std::size_t bins = rfft_bins(n);
  for (std::size_t k = 0; k < bins; ++k) out[k] = buf[k];
  // A real input has exactly real DC/Nyquist bins; pin them so downstream
  // equality tests see true zeros rather than rounding dust.
  out[0] = cplx(out[0].real(), 0.0);
  if (n % 2 == 0) out[bins - 1] = cplx(out[bins - 1].real(), 0.0);
}

void irfft(const cplx* spectrum, std::size_t n, double* out) {
  if (n < 1) throw InvalidInputError("irfft: empty output length");
  const std::size_t bins = rfft_bins(n);
  std::vector<cplx> buf(n);
  buf[0] = cplx(spectrum[0].real(), 0.0);
  for (std::size_t k = 1; k < bins; ++k) {
    if (n % 2 == 0 && k == bins - 1) {
      buf[k] = cplx(spectrum[k].real(), 0.0);
    } else {
      buf[k] = spectrum[k];
      buf[n - k] = std::conj(spectrum[k]);
    }
  }
  transform(buf, true);
  for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real();
}

}  // namespace dstdnn::fft
