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
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dstdnn/tensor.hpp"

namespace dstdnn {

// A named, learnable (or buffer) tensor. Gradients accumulate into `grad`
// across backward passes until zero_grad. `decay` marks weight-decay
// eligibility: matrices yes, biases and normalization affines no.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
  bool decay = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v, bool trainable_ = true, bool decay_ = true)
      : name(std::move(n)),
        value(std::move(v)),
        grad(Tensor::zeros_like(value)),
        trainable(trainable_),
        decay(decay_) {}

  void zero_grad() { grad.fill(0.0); }
};

// Reverse-mode tape over whole tensors. Nodes are appended in evaluation
// order, so reverse iteration is already a topological order for backward.
class Graph {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves -----------------------------------------------------------------
  Var input(Tensor value, bool requires_grad = false);
  Var param(Parameter& p);

  const Tensor& val(Var v) const { return nodes_[v.id].value; }
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].needs_grad; }

  // Elementwise / linear-combination ops ------------------------------------
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var axpby(double alpha, Var a, double beta, Var b);
  Var scale(Var a, double c);
  Var relu(Var a);
  Var tanh_act(Var a);
  Var sigmoid(Var a);
  // sqrt(max(a, floor)); zero derivative on the clamped branch.
  Var sqrt_floor(Var a, double floor);
  Var reshape(Var a, std::vector<std::size_t> shape);

  // Neural-net ops -----------------------------------------------------------
  // x: [B,Cin,T], w: [Cout,Cin,k] (k odd), b: [Cout]; stride 1, zero padding
  // chosen so the frame count is preserved.
  Var conv1d(Var x, Var w, Var b);
  // Batch normalization over [B,C,T] (stats per channel) or [B,F] (stats per
  // feature). When use_batch_stats is false, running statistics are used.
  // When update_running is true, running stats absorb the batch stats with
  // the given momentum (side effect on the caller's tensors).
  Var batchnorm(Var x, Var gamma, Var beta, Tensor& running_mean,
                Tensor& running_var, bool use_batch_stats, bool update_running,
                double momentum, double eps);
  Var linear(Var x, Var w, Var b);  // x: [B,in], w: [out,in], b: [out]
  Var slice_channels(Var x, std::size_t begin, std::size_t end);
  Var concat_channels(const std::vector<Var>& xs);
  Var concat_features(Var a, Var b);      // [B,F1]+[B,F2] -> [B,F1+F2]
  Var gap_frames(Var x);                  // [B,C,T] -> [B,C]
  Var softmax_rows(Var x);                // [B,K] rowwise
  Var bchan_scale(Var x, Var g);          // [B,C,T] * [B,C] broadcast
  Var weighted_pool(Var h, Var alpha);    // [B,C,T],[B,T] -> [B,C]
  Var row_l2_normalize(Var x);            // [B,F]; zero rows are an error
  Var matmul_nt(Var a, Var w);            // [B,F] x [S,F]^T -> [B,S]

  // Spectral ops. Complex tensors carry a trailing dimension of 2 (re, im).
  Var rfft_frames(Var x);                  // [B,C,T] -> [B,C,bins,2]
  Var irfft_frames(Var s, std::size_t t);  // [B,C,bins,2] -> [B,C,T]
  // Elementwise complex product; filt is either per-item [B,C,bins,2] or
  // shared [C,bins,2].
  Var cmul(Var spec, Var filt);
  // bank: [K,C,bins,2], scores: [B,K] -> [B,C,bins,2]
  Var mix_filters(Var bank, Var scores);
  // Linear resampling of the trailing bin axis; f: [...,bins,2].
  Var interp_bins(Var f, std::size_t new_bins);
  // Sparse-regularized modulation: rows with mask=1 get the complex product
  // with fd, deactivated rows pass the spectrum through scaled by lambda[b].
  // mask and lambda are constants for gradient purposes.
  Var sparse_apply(Var spec, Var fd, const Tensor& mask, const Tensor& lambda);

  // Loss ops -----------------------------------------------------------------
  // cos: [B,S]; adds angular margin to each row's target logit, scales all
  // logits. The target angle is clamped so that angle+margin <= pi.
  Var aam_margin(Var cos, const std::vector<std::size_t>& labels, double margin,
                 double scl);
  // Mean softmax cross-entropy over rows; returns a scalar node.
  Var cross_entropy(Var logits, const std::vector<std::size_t>& labels);
  Var sum_all(Var x);
  Var mean_all(Var x);

  // Runs reverse accumulation from a scalar node.
  void backward(Var loss);

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    Parameter* parameter = nullptr;
    std::function<void(Graph&)> backward_fn;
  };

  Var emit(Tensor value, bool needs_grad,
           std::function<void(Graph&)> backward_fn);
  Tensor& grad_buf(int id);
  void add_to_grad(int id, const Tensor& delta);

  std::vector<Node> nodes_;
  friend struct GraphTestPeer;
};

using Var = Graph::Var;

}  // namespace dstdnn
