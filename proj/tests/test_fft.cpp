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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dstdnn/fft.hpp"
#include "test_util.hpp"

using namespace dstdnn;
using testutil::kPi;

TEST_CASE("rfft of a constant signal is a pure DC bin") {
  std::vector<double> x(8, 1.0);
  std::vector<fft::cplx> spec(fft::rfft_bins(8));
  fft::rfft(x.data(), 8, spec.data());
  CHECK(spec[0].real() == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(spec[0].imag() == 0.0);
  for (std::size_t k = 1; k < spec.size(); ++k) {
    CHECK(std::abs(spec[k]) < 1e-12);
  }
}

TEST_CASE("rfft localizes cos(2*pi*2n/8) in bin 2 with value 4") {
  std::vector<double> x(8);
  for (std::size_t n = 0; n < 8; ++n) {
    x[n] = std::cos(2.0 * kPi * 2.0 * static_cast<double>(n) / 8.0);
  }
  // Direct DFT oracle confirms the expected bin value first.
  const auto oracle = testutil::naive_dft(x);
  CHECK(oracle[2].real() == doctest::Approx(4.0).epsilon(1e-12));

  std::vector<fft::cplx> spec(fft::rfft_bins(8));
  fft::rfft(x.data(), 8, spec.data());
  CHECK(spec[2].real() == doctest::Approx(4.0).epsilon(1e-12));
  for (std::size_t k = 0; k < spec.size(); ++k) {
    if (k == 2) continue;
    CHECK(std::abs(spec[k]) < 1e-10);
  }
}

TEST_CASE("rfft matches the naive DFT on odd, even and prime lengths") {
  std::mt19937_64 rng(7);
  for (std::size_t n : {2u, 3u, 7u, 8u, 31u, 32u, 64u, 97u, 100u}) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> x(n);
    for (double& v : x) v = dist(rng);
    const auto oracle = testutil::naive_dft(x);
    std::vector<fft::cplx> spec(fft::rfft_bins(n));
    fft::rfft(x.data(), n, spec.data());
    double scale = 0.0;
    for (const auto& v : oracle) scale = std::max(scale, std::abs(v));
    for (std::size_t k = 0; k < spec.size(); ++k) {
      CHECK(std::abs(spec[k] - oracle[k]) / scale < 1e-10);
    }
  }
}

TEST_CASE("irfft inverts rfft to 1e-10 for assorted lengths") {
  std::mt19937_64 rng(11);
  for (std::size_t n : {2u, 5u, 16u, 33u, 100u, 257u}) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> x(n);
    for (double& v : x) v = dist(rng);
    std::vector<fft::cplx> spec(fft::rfft_bins(n));
    fft::rfft(x.data(), n, spec.data());
    std::vector<double> back(n);
    fft::irfft(spec.data(), n, back.data());
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(back[i] - x[i]) < 1e-10);
    }
  }
}

TEST_CASE("irfft of a lone DC bin of value T is the constant-1 signal") {
  const std::size_t n = 12;
  std::vector<fft::cplx> spec(fft::rfft_bins(n), fft::cplx(0.0, 0.0));
  spec[0] = fft::cplx(static_cast<double>(n), 0.0);
  std::vector<double> x(n);
  fft::irfft(spec.data(), n, x.data());
  for (double v : x) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("irfft of a Hermitian-consistent spectrum matches the naive IDFT") {
  std::mt19937_64 rng(13);
  for (std::size_t n : {7u, 8u, 21u}) {
    // Build a Hermitian-consistent half spectrum from a real signal.
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> source(n);
    for (double& v : source) v = dist(rng);
    const auto full = testutil::naive_dft(source);
    const std::size_t bins = fft::rfft_bins(n);
    std::vector<fft::cplx> half(full.begin(), full.begin() + bins);

    const auto oracle = testutil::naive_idft(full);
    std::vector<double> got(n);
    fft::irfft(half.data(), n, got.data());
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(got[i] - oracle[i].real()) < 1e-10);
      CHECK(std::abs(oracle[i].imag()) < 1e-10);
    }
  }
}

TEST_CASE("Parseval's identity holds per channel") {
  std::mt19937_64 rng(17);
  for (std::size_t n : {8u, 9u, 50u}) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> x(n);
    for (double& v : x) v = dist(rng);
    double time_energy = 0.0;
    for (double v : x) time_energy += v * v;

    std::vector<fft::cplx> spec(fft::rfft_bins(n));
    fft::rfft(x.data(), n, spec.data());
    double spec_energy = std::norm(spec[0]);
    const bool even = n % 2 == 0;
    for (std::size_t k = 1; k < spec.size(); ++k) {
      const bool nyquist = even && k == spec.size() - 1;
      spec_energy += (nyquist ? 1.0 : 2.0) * std::norm(spec[k]);
    }
    spec_energy /= static_cast<double>(n);
    CHECK(spec_energy ==
          doctest::Approx(time_energy).epsilon(1e-8));
  }
}
