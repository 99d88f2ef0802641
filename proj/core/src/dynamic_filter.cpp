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

#include "dstdnn/dynamic_filter.hpp"

#include <cmath>

#include "dstdnn/fft.hpp"

namespace dstdnn {

Var build_attention_scores(Graph& g, Var x, Var fc1w, Var fc1b, Var fc2w,
                           Var fc2b) {
  Var pooled = g.gap_frames(x);
  Var h = g.relu(g.linear(pooled, fc1w, fc1b));
  Var logits = g.linear(h, fc2w, fc2b);
  return g.softmax_rows(logits);
}

Var build_dgf_modulation(Graph& g, Var x, Var bank, Var scores,
                         const SparseMask* mask, Tensor* lambda_out) {
  const std::size_t frames = g.val(x).size(2);
  const std::size_t bins = fft::rfft_bins(frames);
  Var filters = bank;
  if (g.val(bank).size(2) != bins) {
    filters = g.interp_bins(bank, bins);
  }
  Var spectrum = g.rfft_frames(x);
  Var fd = g.mix_filters(filters, scores);
  Var modulated;
  if (mask != nullptr) {
    Tensor lambda = sparse_scale_factors(g.val(fd));
    if (lambda_out != nullptr) *lambda_out = lambda;
    modulated = g.sparse_apply(spectrum, fd, mask->mask, lambda);
  } else {
    modulated = g.cmul(spectrum, fd);
  }
  return g.irfft_frames(modulated, frames);
}

Tensor sparse_scale_factors(const Tensor& fd) {
  if (fd.rank() != 4 || fd.size(3) != 2) {
    throw ShapeError("sparse_scale_factors: expected [B,C,bins,2]");
  }
  const std::size_t batch = fd.size(0);
  const std::size_t per_item = fd.size(1) * fd.size(2);
  Tensor lambda({batch});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = fd.data() + b * per_item * 2;
    double s = 0.0;
    for (std::size_t i = 0; i < per_item; ++i) {
      s += std::hypot(row[2 * i], row[2 * i + 1]);
    }
    lambda[b] = s / static_cast<double>(per_item);
  }
  return lambda;
}

Tensor attention_scores(const FeatureMap& x, const AttentionScorer& a) {
  Graph g;
  Var xv = g.input(x.data);
  Var w1 = g.input(a.fc1_weights);
  Var b1 = g.input(a.fc1_bias);
  Var w2 = g.input(a.fc2_weights);
  Var b2 = g.input(a.fc2_bias);
  Var scores = build_attention_scores(g, xv, w1, b1, w2, b2);
  const Tensor& out = g.val(scores);
  if (!out.all_finite()) {
    throw NumericError("attention_scores: non-finite activations");
  }
  return out;
}

Tensor combine_filters(const FilterBank& bank, const Tensor& scores) {
  if (scores.rank() != 2) throw ShapeError("combine_filters: scores are [B,K]");
  if (scores.size(1) != bank.num_experts()) {
    throw ShapeError("combine_filters: expert-count mismatch");
  }
  Graph g;
  Var bv = g.input(bank.experts);
  Var sv = g.input(scores);
  return g.val(g.mix_filters(bv, sv));
}

SparseMask sample_sparse_mask(std::size_t batch, std::size_t channels,
                              double ratio, Rng& rng) {
  if (ratio < 0.0 || ratio > 1.0) {
    throw InvalidInputError("sample_sparse_mask: ratio outside [0,1]");
  }
  SparseMask m;
  m.ratio = ratio;
  m.mask = Tensor({batch, channels});
  m.lambda_s = Tensor({batch});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < m.mask.numel(); ++i) {
    m.mask[i] = unit(rng) >= ratio ? 1.0 : 0.0;
  }
  return m;
}

FeatureMap dgf_forward(const FeatureMap& x, const FilterBank& bank,
                       const AttentionScorer& a, SparseMask* mask,
                       bool training) {
  if (mask != nullptr && !training) {
    throw ContractViolationError(
        "dgf_forward: sparse mask supplied in inference mode");
  }
  if (bank.channels() != x.channels()) {
    throw ShapeError("dgf_forward: filter-bank channel mismatch");
  }
  if (a.num_experts() != bank.num_experts()) {
    throw ShapeError("dgf_forward: scorer/bank expert-count mismatch");
  }
  Graph g;
  Var xv = g.input(x.data);
  Var bankv = g.input(bank.experts);
  Var w1 = g.input(a.fc1_weights);
  Var b1 = g.input(a.fc1_bias);
  Var w2 = g.input(a.fc2_weights);
  Var b2 = g.input(a.fc2_bias);
  Var scores = build_attention_scores(g, xv, w1, b1, w2, b2);
  Tensor lambda;
  Var out = build_dgf_modulation(g, xv, bankv, scores, mask, &lambda);
  if (mask != nullptr) mask->lambda_s = lambda;
  FeatureMap result;
  result.data = g.val(out);
  result.frame_shift = x.frame_shift;
  return result;
}

}  // namespace dstdnn
