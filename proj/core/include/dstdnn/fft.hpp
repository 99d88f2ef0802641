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

#include <complex>
#include <cstddef>
#include <vector>

namespace dstdnn::fft {

using cplx = std::complex<double>;

// Number of half-spectrum bins kept for a length-n real transform.
inline std::size_t rfft_bins(std::size_t n) { return n / 2 + 1; }

// In-place complex DFT of arbitrary length (radix-2 when n is a power of
// two, Bluestein otherwise), unnormalized forward, 1/n-normalized inverse.
void transform(std::vector<cplx>& a, bool inverse);

// Forward real transform: out[k] = sum_n x[n] * exp(-2*pi*i*k*n/n_samples)
// for k in [0, floor(n/2)]. out must hold rfft_bins(n) elements.
void rfft(const double* x, std::size_t n, cplx* out);

// Inverse of rfft under Hermitian extension of the half spectrum. The
// imaginary parts of the DC bin (and Nyquist bin, n even) do not describe
// any real signal and are ignored. out must hold n elements.
void irfft(const cplx* spectrum, std::size_t n, double* out);

}  // namespace dstdnn::fft
