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

#include "dstdnn/spectral.hpp"
#include "test_util.hpp"

using namespace dstdnn;

namespace {

FeatureMap random_map(std::size_t batch, std::size_t ch, std::size_t frames,
                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FeatureMap x;
  x.data = testutil::random_tensor({batch, ch, frames}, rng);
  return x;
}

}  // namespace

TEST_CASE("rfft_channels/irfft_channels round-trip a 4x16x100 tensor") {
  FeatureMap x = random_map(4, 16, 100, 21);
  FeatureMap back = irfft_channels(rfft_channels(x));
  CHECK(max_abs_diff(x.data, back.data) < 1e-10);
}

TEST_CASE("rfft_channels rejects non-finite input and short signals") {
  FeatureMap x = random_map(1, 2, 8, 22);
  x.data.at3(0, 1, 3) = std::nan("");
  CHECK_THROWS_AS(rfft_channels(x), NumericError);
  FeatureMap tiny;
  tiny.data = Tensor({1, 1, 1});
  CHECK_THROWS_AS(rfft_channels(tiny), InvalidInputError);
}

TEST_CASE("irfft_channels rejects inconsistent bin counts") {
  HalfSpectrum s;
  s.data = Tensor({1, 2, 5, 2});
  s.origin_length = 11;  // needs 6 bins
  CHECK_THROWS_AS(irfft_channels(s), ShapeError);
}

TEST_CASE("gf_forward with an all-pass filter is the identity") {
  FeatureMap x = random_map(2, 3, 17, 23);
  GlobalFilter f = GlobalFilter::all_pass(3, 17 / 2 + 1);
  FeatureMap y = gf_forward(x, f);
  CHECK(max_rel_diff(x.data, y.data) < 1e-10);
}

TEST_CASE("gf_forward with a null filter yields zero") {
  FeatureMap x = random_map(1, 2, 12, 24);
  GlobalFilter f{Tensor({2, 7, 2})};
  FeatureMap y = gf_forward(x, f);
  for (std::size_t i = 0; i < y.data.numel(); ++i) {
    CHECK(std::abs(y.data[i]) < 1e-12);
  }
}

TEST_CASE("gf_forward rejects channel mismatches") {
  FeatureMap x = random_map(1, 3, 16, 25);
  GlobalFilter f = GlobalFilter::all_pass(4, 9);
  CHECK_THROWS_AS(gf_forward(x, f), ShapeError);
}

TEST_CASE("circular_conv_oracle: unit impulse is identity, lag shifts") {
  FeatureMap x = random_map(1, 2, 9, 26);
  Tensor w({2, 9});
  w.at2(0, 0) = 1.0;
  w.at2(1, 0) = 1.0;
  FeatureMap y = circular_conv_oracle(x, w);
  CHECK(max_abs_diff(x.data, y.data) == 0.0);

  // Impulse at lag 1 rotates each channel by one frame.
  Tensor w1({2, 9});
  w1.at2(0, 1) = 1.0;
  w1.at2(1, 1) = 1.0;
  FeatureMap shifted = circular_conv_oracle(x, w1);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t m = 0; m < 9; ++m) {
      CHECK(shifted.data.at3(0, c, m) ==
            doctest::Approx(x.data.at3(0, c, (m + 9 - 1) % 9)));
    }
  }
}

TEST_CASE("convolution theorem: gf_forward equals the direct circular conv") {
  std::mt19937_64 rng(27);
  for (std::size_t frames : {7u, 8u, 31u, 32u, 64u}) {
    for (int rep = 0; rep < 4; ++rep) {
      const std::size_t ch = 1 + rep % 3;
      FeatureMap x;
      x.data = testutil::random_tensor({2, ch, frames}, rng);
      Tensor w = testutil::random_tensor({ch, frames}, rng);
      const FeatureMap direct = circular_conv_oracle(x, w);
      const FeatureMap fast = gf_forward(x, filter_from_kernel(w));
      CHECK(max_rel_diff(direct.data, fast.data) < 1e-8);
    }
  }
}

TEST_CASE("gf_forward matches the expert-combination of per-expert outputs") {
  // Linearity over filters: gf(x, a*f1 + b*f2) = a*gf(x,f1) + b*gf(x,f2).
  FeatureMap x = random_map(1, 2, 20, 28);
  std::mt19937_64 rng(29);
  Tensor f1 = testutil::random_tensor({2, 11, 2}, rng);
  Tensor f2 = testutil::random_tensor({2, 11, 2}, rng);
  Tensor mix({2, 11, 2});
  for (std::size_t i = 0; i < mix.numel(); ++i) {
    mix[i] = 0.3 * f1[i] + 0.7 * f2[i];
  }
  FeatureMap out_mix = gf_forward(x, GlobalFilter{mix});
  FeatureMap out1 = gf_forward(x, GlobalFilter{f1});
  FeatureMap out2 = gf_forward(x, GlobalFilter{f2});
  Tensor expect(out1.data.shape());
  for (std::size_t i = 0; i < expect.numel(); ++i) {
    expect[i] = 0.3 * out1.data[i] + 0.7 * out2.data[i];
  }
  CHECK(max_rel_diff(out_mix.data, expect) < 1e-10);
}

TEST_CASE("gf_forward is linear in its input") {
  FeatureMap x = random_map(1, 2, 15, 30);
  FeatureMap y = random_map(1, 2, 15, 31);
  std::mt19937_64 rng(32);
  GlobalFilter f{testutil::random_tensor({2, 8, 2}, rng)};
  FeatureMap combo;
  combo.data = Tensor(x.data.shape());
  for (std::size_t i = 0; i < combo.data.numel(); ++i) {
    combo.data[i] = 2.0 * x.data[i] - 0.5 * y.data[i];
  }
  const FeatureMap lhs = gf_forward(combo, f);
  const FeatureMap fx = gf_forward(x, f);
  const FeatureMap fy = gf_forward(y, f);
  for (std::size_t i = 0; i < lhs.data.numel(); ++i) {
    CHECK(lhs.data[i] ==
          doctest::Approx(2.0 * fx.data[i] - 0.5 * fy.data[i]).epsilon(1e-9));
  }
}

TEST_CASE("gf_forward commutes with batch permutation") {
  FeatureMap x = random_map(3, 2, 10, 33);
  std::mt19937_64 rng(34);
  GlobalFilter f{testutil::random_tensor({2, 6, 2}, rng)};
  FeatureMap permuted;
  permuted.data = Tensor(x.data.shape());
  const std::size_t perm[3] = {2, 0, 1};
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t t = 0; t < 10; ++t) {
        permuted.data.at3(b, c, t) = x.data.at3(perm[b], c, t);
      }
    }
  }
  const FeatureMap out = gf_forward(x, f);
  const FeatureMap out_perm = gf_forward(permuted, f);
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t t = 0; t < 10; ++t) {
        CHECK(out_perm.data.at3(b, c, t) == out.data.at3(perm[b], c, t));
      }
    }
  }
}

TEST_CASE("gf_forward commutes with circular frame shifts") {
  FeatureMap x = random_map(1, 3, 14, 35);
  std::mt19937_64 rng(36);
  GlobalFilter f{testutil::random_tensor({3, 8, 2}, rng)};
  const std::size_t shift = 5;
  FeatureMap shifted;
  shifted.data = Tensor(x.data.shape());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t t = 0; t < 14; ++t) {
      shifted.data.at3(0, c, (t + shift) % 14) = x.data.at3(0, c, t);
    }
  }
  const FeatureMap out = gf_forward(x, f);
  const FeatureMap out_shifted = gf_forward(shifted, f);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t t = 0; t < 14; ++t) {
      CHECK(out_shifted.data.at3(0, c, (t + shift) % 14) ==
            doctest::Approx(out.data.at3(0, c, t)).epsilon(1e-9));
    }
  }
}

TEST_CASE("interpolate_filter: identity resample returns the input exactly") {
  std::mt19937_64 rng(37);
  GlobalFilter f{testutil::random_tensor({3, 9, 2}, rng)};
  GlobalFilter g = interpolate_filter(f, 16);  // 16/2+1 = 9 bins
  CHECK(max_abs_diff(f.data, g.data) == 0.0);
}

TEST_CASE("interpolate_filter: constants stay constant at any length") {
  GlobalFilter f{Tensor({2, 6, 2})};
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t k = 0; k < 6; ++k) {
      f.data.at3(c, k, 0) = 2.5;
      f.data.at3(c, k, 1) = -1.25;
    }
  }
  for (std::size_t target : {5u, 23u, 64u, 999u}) {
    GlobalFilter g = interpolate_filter(f, target);
    CHECK(g.bins() == target / 2 + 1);
    for (std::size_t i = 0; i < g.data.numel(); i += 2) {
      CHECK(g.data[i] == doctest::Approx(2.5).epsilon(1e-12));
      CHECK(g.data[i + 1] == doctest::Approx(-1.25).epsilon(1e-12));
    }
  }
}

TEST_CASE("interpolate_filter: linear ramp B=5 -> B'=9 hits neighbor means") {
  // Source bins 0..4 carry values 0,1,2,3,4; doubling the grid puts the new
  // odd samples exactly halfway between neighbors.
  GlobalFilter f{Tensor({1, 5, 2})};
  for (std::size_t k = 0; k < 5; ++k) {
    f.data.at3(0, k, 0) = static_cast<double>(k);
  }
  GlobalFilter g = interpolate_filter(f, 16);  // B' = 9
  REQUIRE(g.bins() == 9);
  for (std::size_t j = 0; j < 9; ++j) {
    const double expected = static_cast<double>(j) * 4.0 / 8.0;
    CHECK(g.data.at3(0, j, 0) == doctest::Approx(expected).epsilon(1e-12));
  }
  // Midpoints equal the arithmetic mean of their neighbors.
  for (std::size_t j = 1; j < 9; j += 2) {
    const double mean =
        0.5 * (g.data.at3(0, j - 1, 0) + g.data.at3(0, j + 1, 0));
    CHECK(g.data.at3(0, j, 0) == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("gf_forward auto-interpolates filters built for another length") {
  FeatureMap x = random_map(1, 2, 50, 38);
  GlobalFilter f = GlobalFilter::all_pass(2, 101);  // sized for T=200
  FeatureMap y = gf_forward(x, f);
  CHECK(max_rel_diff(x.data, y.data) < 1e-7);
}

TEST_CASE("Parseval energy identity via the half spectrum") {
  FeatureMap x = random_map(2, 3, 13, 39);
  HalfSpectrum s = rfft_channels(x);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t c = 0; c < 3; ++c) {
      double time_energy = 0.0;
      for (std::size_t t = 0; t < 13; ++t) {
        time_energy += x.data.at3(b, c, t) * x.data.at3(b, c, t);
      }
      double spec_energy =
          s.data.at4(b, c, 0, 0) * s.data.at4(b, c, 0, 0);
      for (std::size_t k = 1; k < s.bins(); ++k) {
        const double re = s.data.at4(b, c, k, 0);
        const double im = s.data.at4(b, c, k, 1);
        spec_energy += 2.0 * (re * re + im * im);
      }
      spec_energy /= 13.0;
      CHECK(spec_energy == doctest::Approx(time_energy).epsilon(1e-8));
    }
  }
}
