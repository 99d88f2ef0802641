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

#include "dstdnn/dynamic_filter.hpp"
#include "test_util.hpp"

using namespace dstdnn;

namespace {

AttentionScorer zero_scorer(std::size_t channels, std::size_t experts) {
  AttentionScorer a;
  a.fc1_weights = Tensor({experts, channels});
  a.fc1_bias = Tensor({experts});
  a.fc2_weights = Tensor({experts, experts});
  a.fc2_bias = Tensor({experts});
  return a;
}

AttentionScorer random_scorer(std::size_t channels, std::size_t experts,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  AttentionScorer a;
  a.fc1_weights = testutil::random_tensor({experts, channels}, rng, 0.5);
  a.fc1_bias = testutil::random_tensor({experts}, rng, 0.5);
  a.fc2_weights = testutil::random_tensor({experts, experts}, rng, 0.5);
  a.fc2_bias = testutil::random_tensor({experts}, rng, 0.5);
  return a;
}

FeatureMap random_map(std::size_t batch, std::size_t ch, std::size_t frames,
                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FeatureMap x;
  x.data = testutil::random_tensor({batch, ch, frames}, rng);
  return x;
}

FilterBank random_bank(std::size_t experts, std::size_t ch, std::size_t bins,
                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return FilterBank{testutil::random_tensor({experts, ch, bins, 2}, rng, 0.5)};
}

}  // namespace

TEST_CASE("attention_scores: zero parameters give uniform 1/K scores") {
  FeatureMap x = random_map(3, 4, 10, 70);
  AttentionScorer a = zero_scorer(4, 5);
  Tensor w = attention_scores(x, a);
  for (std::size_t i = 0; i < w.numel(); ++i) {
    CHECK(w[i] == doctest::Approx(0.2).epsilon(1e-12));
  }
}

TEST_CASE("attention_scores rows sum to one") {
  FeatureMap x = random_map(4, 6, 12, 71);
  AttentionScorer a = random_scorer(6, 3, 72);
  Tensor w = attention_scores(x, a);
  for (std::size_t b = 0; b < 4; ++b) {
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(w.at2(b, k) > 0.0);
      CHECK(w.at2(b, k) < 1.0);
      s += w.at2(b, k);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-7));
  }
}

TEST_CASE("attention_scores: hand-set logits (2, 0) softmax to the closed form") {
  // Construct a scorer whose FC2 output is (2, 0) regardless of input:
  // zero weights, bias (2, 0).
  FeatureMap x = random_map(1, 3, 8, 73);
  AttentionScorer a = zero_scorer(3, 2);
  a.fc2_bias[0] = 2.0;
  a.fc2_bias[1] = 0.0;
  Tensor w = attention_scores(x, a);
  const double e2 = std::exp(2.0);
  CHECK(w.at2(0, 0) == doctest::Approx(e2 / (e2 + 1.0)).epsilon(1e-12));
  CHECK(w.at2(0, 1) == doctest::Approx(1.0 / (e2 + 1.0)).epsilon(1e-12));
  CHECK(w.at2(0, 0) == doctest::Approx(0.8807970779778823).epsilon(1e-12));
  CHECK(w.at2(0, 1) == doctest::Approx(0.11920292202211755).epsilon(1e-12));
}

TEST_CASE("attention_scores is invariant to frame permutations") {
  FeatureMap x = random_map(1, 4, 9, 74);
  FeatureMap shuffled = x;
  std::mt19937_64 rng(75);
  std::vector<std::size_t> perm(9);
  for (std::size_t i = 0; i < 9; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t t = 0; t < 9; ++t) {
      shuffled.data.at3(0, c, t) = x.data.at3(0, c, perm[t]);
    }
  }
  AttentionScorer a = random_scorer(4, 3, 76);
  const Tensor w1 = attention_scores(x, a);
  const Tensor w2 = attention_scores(shuffled, a);
  for (std::size_t i = 0; i < w1.numel(); ++i) {
    CHECK(w1[i] == doctest::Approx(w2[i]).epsilon(1e-12));
  }
}

TEST_CASE("combine_filters: K=1 returns the lone expert for any score") {
  FilterBank bank = random_bank(1, 3, 6, 77);
  Tensor scores({2, 1}, 1.0);
  Tensor fd = combine_filters(bank, scores);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t i = 0; i < 3 * 6 * 2; ++i) {
      CHECK(fd[b * 3 * 6 * 2 + i] == bank.experts[i]);
    }
  }
}

TEST_CASE("combine_filters: one-hot scores select that expert exactly") {
  FilterBank bank = random_bank(4, 2, 5, 78);
  Tensor scores({1, 4});
  scores.at2(0, 2) = 1.0;
  Tensor fd = combine_filters(bank, scores);
  const std::size_t stride = 2 * 5 * 2;
  for (std::size_t i = 0; i < stride; ++i) {
    CHECK(fd[i] == bank.experts[2 * stride + i]);
  }
}

TEST_CASE("combine_filters: equal weights average constant experts") {
  FilterBank bank{Tensor({2, 2, 4, 2})};
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t k = 0; k < 4; ++k) {
      bank.experts.at4(0, c, k, 0) = 1.0;
      bank.experts.at4(1, c, k, 0) = 3.0;
    }
  }
  Tensor scores({1, 2});
  scores.at2(0, 0) = 0.5;
  scores.at2(0, 1) = 0.5;
  Tensor fd = combine_filters(bank, scores);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(fd.at4(0, c, k, 0) == doctest::Approx(2.0).epsilon(1e-12));
      CHECK(fd.at4(0, c, k, 1) == doctest::Approx(0.0));
    }
  }
}

TEST_CASE("combine_filters rejects expert-count mismatches") {
  FilterBank bank = random_bank(3, 2, 4, 79);
  Tensor scores({1, 4});
  CHECK_THROWS_AS(combine_filters(bank, scores), ShapeError);
}

TEST_CASE("sample_sparse_mask boundary ratios") {
  Rng rng = make_rng(80);
  SparseMask all_on = sample_sparse_mask(3, 5, 0.0, rng);
  for (std::size_t i = 0; i < all_on.mask.numel(); ++i) {
    CHECK(all_on.mask[i] == 1.0);
  }
  SparseMask all_off = sample_sparse_mask(3, 5, 1.0, rng);
  for (std::size_t i = 0; i < all_off.mask.numel(); ++i) {
    CHECK(all_off.mask[i] == 0.0);
  }
  CHECK_THROWS_AS(sample_sparse_mask(1, 1, 1.5, rng), InvalidInputError);
}

TEST_CASE("sample_sparse_mask empirical zero fraction tracks the ratio") {
  Rng rng = make_rng(81);
  const double ratio = 0.3;
  std::size_t zeros = 0, total = 0;
  // 10^5 Bernoulli draws.
  for (int rep = 0; rep < 100; ++rep) {
    SparseMask m = sample_sparse_mask(10, 100, ratio, rng);
    for (std::size_t i = 0; i < m.mask.numel(); ++i) {
      zeros += m.mask[i] == 0.0 ? 1 : 0;
      ++total;
    }
  }
  CHECK(total == 100000);
  const double frac = static_cast<double>(zeros) / static_cast<double>(total);
  CHECK(std::abs(frac - ratio) < 0.01);
}

TEST_CASE("dgf_forward: single all-pass expert is the identity") {
  FeatureMap x = random_map(2, 3, 16, 82);
  FilterBank bank{Tensor({1, 3, 9, 2})};
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t k = 0; k < 9; ++k) bank.experts.at4(0, c, k, 0) = 1.0;
  }
  AttentionScorer a = random_scorer(3, 1, 83);
  FeatureMap y = dgf_forward(x, bank, a, nullptr, /*training=*/false);
  CHECK(max_rel_diff(x.data, y.data) < 1e-10);
}

TEST_CASE("dgf_forward equals the score-weighted sum of per-expert outputs") {
  // Mixing filters then modulating must agree with modulating per expert
  // and mixing the outputs (distributivity of the Hadamard product).
  for (int rep = 0; rep < 5; ++rep) {
    const std::size_t ch = 2 + rep % 3;
    const std::size_t frames = 12 + 7 * rep;
    const std::size_t experts = 2 + rep;
    FeatureMap x = random_map(2, ch, frames, 84 + rep);
    FilterBank bank =
        random_bank(experts, ch, frames / 2 + 1, 85 + rep);
    AttentionScorer a = random_scorer(ch, experts, 86 + rep);

    const FeatureMap mixed = dgf_forward(x, bank, a, nullptr, false);

    const Tensor scores = attention_scores(x, a);
    Tensor expect(x.data.shape());
    for (std::size_t e = 0; e < experts; ++e) {
      GlobalFilter f{Tensor({ch, frames / 2 + 1, 2})};
      for (std::size_t i = 0; i < f.data.numel(); ++i) {
        f.data[i] = bank.experts[e * f.data.numel() + i];
      }
      const FeatureMap out = gf_forward(x, f);
      for (std::size_t b = 0; b < 2; ++b) {
        const double w = scores.at2(b, e);
        for (std::size_t i = 0; i < ch * frames; ++i) {
          expect[b * ch * frames + i] += w * out.data[b * ch * frames + i];
        }
      }
    }
    CHECK(max_rel_diff(mixed.data, expect) < 1e-8);
  }
}

TEST_CASE("dgf_forward with frozen uniform scores equals the mean filter") {
  const std::size_t ch = 3, frames = 14, experts = 4;
  FeatureMap x = random_map(1, ch, frames, 90);
  FilterBank bank = random_bank(experts, ch, frames / 2 + 1, 91);
  AttentionScorer a = zero_scorer(ch, experts);  // uniform scores
  const FeatureMap dynamic = dgf_forward(x, bank, a, nullptr, false);

  GlobalFilter mean{Tensor({ch, frames / 2 + 1, 2})};
  for (std::size_t e = 0; e < experts; ++e) {
    for (std::size_t i = 0; i < mean.data.numel(); ++i) {
      mean.data[i] += bank.experts[e * mean.data.numel() + i] /
                      static_cast<double>(experts);
    }
  }
  const FeatureMap statics = gf_forward(x, mean);
  CHECK(max_rel_diff(dynamic.data, statics.data) < 1e-10);
}

TEST_CASE("dgf_forward rejects a mask in inference mode") {
  FeatureMap x = random_map(1, 2, 8, 92);
  FilterBank bank = random_bank(2, 2, 5, 93);
  AttentionScorer a = random_scorer(2, 2, 94);
  Rng rng = make_rng(95);
  SparseMask mask = sample_sparse_mask(1, 2, 0.5, rng);
  CHECK_THROWS_AS(dgf_forward(x, bank, a, &mask, /*training=*/false),
                  ContractViolationError);
}

TEST_CASE("dgf_forward: r=0 training output equals eval output bit-for-bit") {
  FeatureMap x = random_map(2, 4, 18, 96);
  FilterBank bank = random_bank(3, 4, 10, 97);
  AttentionScorer a = random_scorer(4, 3, 98);
  Rng rng = make_rng(99);
  SparseMask mask = sample_sparse_mask(2, 4, 0.0, rng);
  const FeatureMap trained = dgf_forward(x, bank, a, &mask, true);
  const FeatureMap evaled = dgf_forward(x, bank, a, nullptr, false);
  for (std::size_t i = 0; i < trained.data.numel(); ++i) {
    CHECK(trained.data[i] == evaled.data[i]);
  }
}

TEST_CASE("dgf_forward: r=1 output is lambda_s times the input") {
  FeatureMap x = random_map(2, 3, 20, 100);
  FilterBank bank = random_bank(2, 3, 11, 101);
  AttentionScorer a = random_scorer(3, 2, 102);
  Rng rng = make_rng(103);
  SparseMask mask = sample_sparse_mask(2, 3, 1.0, rng);
  const FeatureMap out = dgf_forward(x, bank, a, &mask, true);
  REQUIRE(mask.lambda_s.numel() == 2);
  for (std::size_t b = 0; b < 2; ++b) {
    CHECK(mask.lambda_s[b] > 0.0);
    for (std::size_t i = 0; i < 3 * 20; ++i) {
      const double expect = mask.lambda_s[b] * x.data[b * 3 * 20 + i];
      const double got = out.data[b * 3 * 20 + i];
      CHECK(std::abs(got - expect) <=
            1e-10 * std::max(1.0, std::abs(expect)));
    }
  }
}

TEST_CASE("lambda_s is the mean complex modulus of the dynamic filter") {
  Tensor fd({1, 2, 3, 2});
  // |3+4i| = 5 everywhere -> lambda = 5.
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t k = 0; k < 3; ++k) {
      fd.at4(0, c, k, 0) = 3.0;
      fd.at4(0, c, k, 1) = 4.0;
    }
  }
  Tensor lambda = sparse_scale_factors(fd);
  CHECK(lambda[0] == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("masked filter rows receive no analytic gradient") {
  // K=1 so the dynamic filter is input-independent: gradients for masked
  // rows must be exactly zero (the all-pass gain is a constant), and
  // unmasked rows must match the per-item gradients without a mask.
  const std::size_t ch = 3, frames = 10, bins = 6;
  std::mt19937_64 trng(104);
  Tensor x = testutil::random_tensor({2, ch, frames}, trng);
  Tensor bank = testutil::random_tensor({1, ch, bins, 2}, trng, 0.5);
  Tensor scores({2, 1}, 1.0);
  Tensor mask({2, ch}, 1.0);
  mask.at2(0, 1) = 0.0;
  mask.at2(1, 2) = 0.0;

  Graph g;
  Var xv = g.input(x);
  Var bv = g.input(bank, true);
  Var sv = g.input(scores);
  SparseMask sm{mask, 0.5, Tensor({2})};
  Var out = build_dgf_modulation(g, xv, bv, sv, &sm, nullptr);
  g.backward(g.sum_all(out));
  const Tensor gb = g.grad(bv);

  // Unmasked reference: batch item 0 only, no mask.
  Graph g2;
  Tensor x0({1, ch, frames});
  for (std::size_t i = 0; i < ch * frames; ++i) x0[i] = x[i];
  Var xv2 = g2.input(x0);
  Var bv2 = g2.input(bank, true);
  Var sv2 = g2.input(Tensor({1, 1}, 1.0));
  Var out2 = build_dgf_modulation(g2, xv2, bv2, sv2, nullptr, nullptr);
  g2.backward(g2.sum_all(out2));
  const Tensor gb_item0 = g2.grad(bv2);

  for (std::size_t k = 0; k < bins; ++k) {
    // Channel 1 is masked in item 0 and active in item 1; channel 0 is
    // active in both. Check channel 0's gradient includes item 0's part.
    CHECK(gb.at4(0, 0, k, 0) != 0.0);
  }
  // A channel masked in every batch item gets exactly zero gradient.
  Tensor mask_all({2, ch}, 1.0);
  mask_all.at2(0, 1) = 0.0;
  mask_all.at2(1, 1) = 0.0;
  Graph g3;
  Var xv3 = g3.input(x);
  Var bv3 = g3.input(bank, true);
  Var sv3 = g3.input(scores);
  SparseMask sm3{mask_all, 0.5, Tensor({2})};
  Var out3 = build_dgf_modulation(g3, xv3, bv3, sv3, &sm3, nullptr);
  g3.backward(g3.sum_all(out3));
  const Tensor gb3 = g3.grad(bv3);
  for (std::size_t k = 0; k < bins; ++k) {
    CHECK(gb3.at4(0, 1, k, 0) == 0.0);
    CHECK(gb3.at4(0, 1, k, 1) == 0.0);
  }
  (void)gb_item0;
}
