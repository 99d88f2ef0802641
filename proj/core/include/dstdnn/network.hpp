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

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dstdnn/autodiff.hpp"
#include "dstdnn/common.hpp"
#include "dstdnn/dynamic_filter.hpp"

namespace dstdnn {

// Full architecture description. Channel counts are totals; each branch
// operates on base_channels/2. Per-layer lists have n_block_pairs entries.
struct ModelConfig {
  std::size_t n_mels = 80;
  std::size_t n_block_pairs = 3;
  std::size_t base_channels = 64;
  std::vector<std::size_t> res2_scales = {4, 4, 4};
  std::vector<std::size_t> experts = {4, 4, 8};
  std::vector<double> sparse_ratio = {0.3, 0.1, 0.1};
  std::size_t mfa_dim = 192;
  std::size_t embedding_dim = 192;
  std::size_t stem_kernel = 7;
  std::size_t local_kernel = 3;
  // (self, other) weights of the cross-branch fusion before each block pair.
  std::array<double, 2> fusion_weights = {0.8, 0.2};
  // Token length the filter banks are parameterized for; other lengths use
  // filter interpolation.
  std::size_t filter_frames = 200;

  void validate() const;
  std::size_t branch_channels() const { return base_channels / 2; }

  static ModelConfig toy();        // test-scale default
  static ModelConfig variant_s();  // C=512
  static ModelConfig variant_b();  // C=1024
  static ModelConfig variant_l();  // C=1536
};

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& json_text);

// Forward-pass mode switches. mask_seed fixes the sparse-mask draw for the
// step, which keeps the loss reproducible under repeated evaluation.
struct ForwardOptions {
  bool training = false;
  bool freeze_bn_stats = false;  // use running stats even when training
  bool update_bn_stats = true;
  bool disable_sparse = false;
  std::uint64_t mask_seed = 0;
};

class ParameterRegistry {
 public:
  void add(Parameter* p) { params_.push_back(p); }
  const std::vector<Parameter*>& all() const { return params_; }
  std::vector<Parameter*> trainable() const {
    std::vector<Parameter*> out;
    for (Parameter* p : params_) {
      if (p->trainable) out.push_back(p);
    }
    return out;
  }
  Parameter* find(const std::string& name) const {
    for (Parameter* p : params_) {
      if (p->name == name) return p;
    }
    return nullptr;
  }
  void zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
  }

 private:
  std::vector<Parameter*> params_;
};

namespace layers {

struct Conv1dLayer {
  Parameter weight, bias;
  void init(const std::string& name, std::size_t cout, std::size_t cin,
            std::size_t kernel, Rng& rng, ParameterRegistry& reg);
  Var forward(Graph& g, Var x) {
    return g.conv1d(x, g.param(weight), g.param(bias));
  }
};

struct LinearLayer {
  Parameter weight, bias;
  void init(const std::string& name, std::size_t fout, std::size_t fin,
            Rng& rng, ParameterRegistry& reg);
  Var forward(Graph& g, Var x) {
    return g.linear(x, g.param(weight), g.param(bias));
  }
};

struct BatchNormLayer {
  Parameter gamma, beta;
  Parameter run_mean, run_var;  // buffers, not trainable
  double momentum = 0.1;
  double eps = 1e-5;
  void init(const std::string& name, std::size_t channels,
            ParameterRegistry& reg);
  Var forward(Graph& g, Var x, const ForwardOptions& opts);
};

// 1x1 convolution followed by ReLU and BatchNorm.
struct ProjLayer {
  Conv1dLayer conv;
  BatchNormLayer bn;
  void init(const std::string& name, std::size_t cout, std::size_t cin,
            Rng& rng, ParameterRegistry& reg);
  Var forward(Graph& g, Var x, const ForwardOptions& opts);
};

// Hierarchical grouped convolution; the first group passes through, every
// later group convolves its tokens plus the previous group's output.
struct Res2ConvLayer {
  std::size_t scales = 1;
  std::size_t group_channels = 0;
  std::vector<Conv1dLayer> convs;      // scales-1 entries
  std::vector<BatchNormLayer> bns;
  void init(const std::string& name, std::size_t channels, std::size_t scales_,
            std::size_t kernel, Rng& rng, ParameterRegistry& reg);
  Var forward(Graph& g, Var x, const ForwardOptions& opts);
};

struct SELayer {
  LinearLayer fc1, fc2;
  void init(const std::string& name, std::size_t channels, Rng& rng,
            ParameterRegistry& reg);
  Var forward(Graph& g, Var x);
};

struct DgfLayer {
  Parameter filters;  // [K, C, bins, 2]
  LinearLayer fc1, fc2;
  double sparse_ratio = 0.0;
  std::size_t layer_index = 0;
  void init(const std::string& name, std::size_t experts, std::size_t channels,
            std::size_t bins, double ratio, std::size_t layer_index_, Rng& rng,
            ParameterRegistry& reg);
  Var forward(Graph& g, Var x, const ForwardOptions& opts);
};

struct LocalBlock {
  ProjLayer proj_in, proj_out;
  Res2ConvLayer res2;
  SELayer se;
  void init(const std::string& name, std::size_t channels, std::size_t scales,
            std::size_t kernel, Rng& rng, ParameterRegistry& reg);
  Var forward(Graph& g, Var x, const ForwardOptions& opts);
};

struct GlobalBlock {
  ProjLayer proj_in, proj_out;
  DgfLayer dgf;
  void init(const std::string& name, std::size_t channels, std::size_t experts,
            std::size_t bins, double ratio, std::size_t layer_index, Rng& rng,
            ParameterRegistry& reg);
  Var forward(Graph& g, Var x, const ForwardOptions& opts);
};

struct AspLayer {
  Conv1dLayer att_hidden;  // W, b of the frame scorer
  Conv1dLayer att_score;   // v, k
  void init(const std::string& name, std::size_t channels, Rng& rng,
            ParameterRegistry& reg);
  Var forward(Graph& g, Var h);
};

}  // namespace layers

// Dual-stream TDNN: stem split into local/global branches, cross-branch
// fusion before every block pair, MFA concat + projection, attentive
// statistics pooling and a linear embedding head.
class DsTdnn {
 public:
  explicit DsTdnn(const ModelConfig& cfg, std::uint64_t init_seed = 1);
  DsTdnn(const DsTdnn&) = delete;
  DsTdnn& operator=(const DsTdnn&) = delete;

  // features: [B, n_mels, T] -> embedding [B, embedding_dim]
  Var forward(Graph& g, Var features, const ForwardOptions& opts);

  // Convenience wrapper running a fresh graph.
  Tensor embed(const Tensor& features, const ForwardOptions& opts);

  const ModelConfig& config() const { return cfg_; }
  ParameterRegistry& params() { return registry_; }
  const ParameterRegistry& params() const { return registry_; }

  layers::DgfLayer& global_filter_layer(std::size_t i) {
    return global_blocks_[i].dgf;
  }

 private:
  ModelConfig cfg_;
  layers::Conv1dLayer stem_conv_;
  layers::BatchNormLayer stem_bn_;
  std::vector<layers::LocalBlock> local_blocks_;
  std::vector<layers::GlobalBlock> global_blocks_;
  layers::ProjLayer mfa_;
  layers::AspLayer asp_;
  layers::BatchNormLayer embed_bn_;
  layers::LinearLayer embed_proj_;
  ParameterRegistry registry_;
};

// Exact count of trainable scalars for a configuration (complex filter
// entries count as two).
std::size_t count_parameters(const ModelConfig& cfg);

// Coarse grouping used by the gradient checker to stratify its samples:
// stem, projection, res2conv, se, filter, scorer, bn_affine, mfa, asp,
// embed, aam, other.
std::string parameter_family(const std::string& name);

}  // namespace dstdnn
