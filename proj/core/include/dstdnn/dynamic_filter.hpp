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
#include <optional>

#include "dstdnn/autodiff.hpp"
#include "dstdnn/common.hpp"
#include "dstdnn/spectral.hpp"

namespace dstdnn {

// K expert filters combined per input by the attention scorer.
struct FilterBank {
  Tensor experts;  // [K, C, bins, 2]

  std::size_t num_experts() const { return experts.size(0); }
  std::size_t channels() const { return experts.size(1); }
  std::size_t bins() const { return experts.size(2); }
};

// GAP -> FC1 -> ReLU -> FC2 -> Softmax; both layers have K neurons.
struct AttentionScorer {
  Tensor fc1_weights;  // [K, C]
  Tensor fc1_bias;     // [K]
  Tensor fc2_weights;  // [K, K]
  Tensor fc2_bias;     // [K]

  std::size_t num_experts() const { return fc2_weights.size(0); }
};

// Training-time random channel deactivation. lambda_s is derived from the
// dynamic filter during application and recorded here per batch item.
struct SparseMask {
  Tensor mask;      // [B, C], entries in {0, 1}
  double ratio = 0.0;
  Tensor lambda_s;  // [B], filled by dgf_forward / the global block
};

// Per-input mixing scores; rows sum to one.
Tensor attention_scores(const FeatureMap& x, const AttentionScorer& a);

// Normalized linear combination of the expert filters: one filter per
// batch item, [B, C, bins, 2]. Score rows must sum to one.
Tensor combine_filters(const FilterBank& bank, const Tensor& scores);

// mask[b,c] = 1 with probability 1-ratio, independently per entry.
SparseMask sample_sparse_mask(std::size_t batch, std::size_t channels,
                              double ratio, Rng& rng);

// Dynamic filtering: modulate the half spectrum with the score-mixed
// filter; with a mask, deactivated channels pass through a scaled all-pass
// response of gain lambda_s (written back into mask->lambda_s). A mask may
// only be supplied in training mode.
FeatureMap dgf_forward(const FeatureMap& x, const FilterBank& bank,
                       const AttentionScorer& a, SparseMask* mask,
                       bool training);

// Mean complex modulus of each item's dynamic filter: the all-pass gain
// applied to deactivated channels. fd: [B, C, bins, 2] -> [B].
Tensor sparse_scale_factors(const Tensor& fd);

// Graph builders shared between the value-level API above and the network's
// global blocks. `bank` and scorer parameters are tape nodes so gradients
// reach them; the mask (if any) is a per-step constant.
Var build_attention_scores(Graph& g, Var x, Var fc1w, Var fc1b, Var fc2w,
                           Var fc2b);
Var build_dgf_modulation(Graph& g, Var x, Var bank, Var scores,
                         const SparseMask* mask, Tensor* lambda_out);

}  // namespace dstdnn
