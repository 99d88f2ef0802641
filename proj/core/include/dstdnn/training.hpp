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

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dstdnn/corpus.hpp"
#include "dstdnn/network.hpp"

namespace dstdnn {

// Additive-angular-margin classification head. Class rows and embeddings
// are L2-normalized inside the loss; margin is added to the target angle.
struct AamHead {
  Parameter class_weights;  // [n_speakers, embedding_dim]
  double margin = 0.2;
  double scale = 30.0;

  AamHead(std::size_t n_speakers, std::size_t embedding_dim,
          std::uint64_t seed = 1);
  std::size_t n_classes() const { return class_weights.value.size(0); }
};

struct AamResult {
  Var loss;    // scalar
  Var logits;  // [B, n_speakers], margin applied, scaled
};

AamResult aam_loss(Graph& g, Var embeddings,
                   const std::vector<std::size_t>& labels, AamHead& head);

// Two-stage schedule: linear warmup, then per-step geometric decay from
// lr_start to lr_end. The optional fine-tune stage reruns the loop with
// longer crops, a larger margin and its own learning-rate ramp.
struct TrainSchedule {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr_start = 1e-3;
  double lr_end = 1e-5;
  std::size_t warmup_steps = 10;
  double weight_decay = 2e-5;
  double crop_seconds = 2.0;

  bool fine_tune = false;
  std::size_t fine_tune_epochs = 5;
  double fine_tune_margin = 0.5;
  double fine_tune_crop_seconds = 6.0;
  double fine_tune_lr_start = 1e-4;
  double fine_tune_lr_end = 2.5e-5;

  void validate() const;
};

std::string schedule_to_json(const TrainSchedule& s);
TrainSchedule schedule_from_json(const std::string& text);

// Learning rate at 1-based step t of total_steps.
double schedule_lr(double lr_start, double lr_end, std::size_t warmup_steps,
                   std::size_t t, std::size_t total_steps);

// Adam with decoupled weight decay; decay skips biases and normalization
// affine parameters (Parameter::decay == false).
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Parameter*> params, double weight_decay,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(double lr);
  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_, v_;
  double weight_decay_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double lr = 0.0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double mean_accuracy = 0.0;
};

struct TrainReport {
  std::vector<StepRecord> steps;
  std::vector<EpochStats> epochs;
  double final_loss = 0.0;
  std::vector<std::string> speaker_order;  // label index -> speaker id
};

// Trains the model on a corpus manifest (log-mel features are computed and
// cached internally). Deterministic given the seed. metrics_csv_path may be
// empty to skip the log. Throws NumericError if the loss diverges.
TrainReport train(const std::vector<UtteranceRecord>& manifest, DsTdnn& model,
                  AamHead& head, const TrainSchedule& schedule,
                  std::uint64_t seed, const std::string& metrics_csv_path);

// ---------------------------------------------------------------------------
// Finite-difference gradient oracle
// ---------------------------------------------------------------------------

struct GradCheckFailure {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  std::size_t samples_checked = 0;
  std::size_t kink_resamples = 0;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  std::vector<GradCheckFailure> failures;
  std::map<std::string, std::size_t> family_counts;
  bool passed() const { return failures.empty(); }
};

// Compares analytic gradients of the AAM training loss against central
// finite differences on n_samples scalars drawn round-robin across the
// parameter families. Perturbations whose two-step-size estimates disagree
// (an activation kink was crossed) are resampled. Relative error uses a
// denominator floor of 1e-2, so `tolerance` relative doubles as a
// tolerance*1e-2 absolute floor. Runs with sparse masks disabled: the
// all-pass scale factor is defined as a constant of the step, so the path
// through it has no analytic gradient.
GradCheckReport finite_diff_check(DsTdnn& model, AamHead& head,
                                  const Tensor& features,
                                  const std::vector<std::size_t>& labels,
                                  std::size_t n_samples, double step_h,
                                  double tolerance, std::uint64_t seed);

}  // namespace dstdnn
