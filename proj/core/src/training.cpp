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

#include "dstdnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "dstdnn/frontend.hpp"
#include "dstdnn/wav.hpp"

namespace dstdnn {

using json = nlohmann::json;

AamHead::AamHead(std::size_t n_speakers, std::size_t embedding_dim,
                 std::uint64_t seed) {
  class_weights =
      Parameter("aam.class_weights", Tensor({n_speakers, embedding_dim}));
  Rng rng = make_rng(seed, 0xAA);
  const double bound = std::sqrt(6.0 / static_cast<double>(embedding_dim));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::size_t i = 0; i < class_weights.value.numel(); ++i) {
    class_weights.value[i] =
        static_cast<double>(static_cast<float>(dist(rng)));
  }
}

AamResult aam_loss(Graph& g, Var embeddings,
                   const std::vector<std::size_t>& labels, AamHead& head) {
  if (head.margin < 0.0 || head.margin >= 1.5707963267948966) {
    throw InvalidInputError("aam_loss: margin outside [0, pi/2)");
  }
  if (head.scale <= 0.0) throw InvalidInputError("aam_loss: scale <= 0");
  Var emb_n = g.row_l2_normalize(embeddings);
  Var w_n = g.row_l2_normalize(g.param(head.class_weights));
  Var cos = g.matmul_nt(emb_n, w_n);
  Var logits = g.aam_margin(cos, labels, head.margin, head.scale);
  Var loss = g.cross_entropy(logits, labels);
  return {loss, logits};
}

void TrainSchedule::validate() const {
  if (epochs == 0) throw ConfigError("schedule: epochs must be positive");
  if (batch_size == 0) throw ConfigError("schedule: batch_size must be positive");
  if (!(lr_start >= lr_end && lr_end > 0.0)) {
    throw ConfigError("schedule: need lr_start >= lr_end > 0");
  }
  if (crop_seconds <= 0.0) throw ConfigError("schedule: crop_seconds <= 0");
  if (weight_decay < 0.0) throw ConfigError("schedule: negative weight decay");
  if (fine_tune) {
    if (fine_tune_epochs == 0) {
      throw ConfigError("schedule: fine_tune_epochs must be positive");
    }
    if (!(fine_tune_lr_start >= fine_tune_lr_end && fine_tune_lr_end > 0.0)) {
      throw ConfigError("schedule: bad fine-tune learning rates");
    }
  }
}

std::string schedule_to_json(const TrainSchedule& s) {
  json j;
  j["epochs"] = s.epochs;
  j["batch_size"] = s.batch_size;
  j["lr_start"] = s.lr_start;
  j["lr_end"] = s.lr_end;
  j["warmup_steps"] = s.warmup_steps;
  j["weight_decay"] = s.weight_decay;
  j["crop_seconds"] = s.crop_seconds;
  j["fine_tune"] = s.fine_tune;
  j["fine_tune_epochs"] = s.fine_tune_epochs;
  j["fine_tune_margin"] = s.fine_tune_margin;
  j["fine_tune_crop_seconds"] = s.fine_tune_crop_seconds;
  j["fine_tune_lr_start"] = s.fine_tune_lr_start;
  j["fine_tune_lr_end"] = s.fine_tune_lr_end;
  return j.dump(2);
}

TrainSchedule schedule_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("schedule: invalid JSON: ") + e.what());
  }
  TrainSchedule s;
  try {
    if (j.contains("epochs")) s.epochs = j["epochs"];
    if (j.contains("batch_size")) s.batch_size = j["batch_size"];
    if (j.contains("lr_start")) s.lr_start = j["lr_start"];
    if (j.contains("lr_end")) s.lr_end = j["lr_end"];
    if (j.contains("warmup_steps")) s.warmup_steps = j["warmup_steps"];
    if (j.contains("weight_decay")) s.weight_decay = j["weight_decay"];
    if (j.contains("crop_seconds")) s.crop_seconds = j["crop_seconds"];
    if (j.contains("fine_tune")) s.fine_tune = j["fine_tune"];
    if (j.contains("fine_tune_epochs")) s.fine_tune_epochs = j["fine_tune_epochs"];
    if (j.contains("fine_tune_margin")) s.fine_tune_margin = j["fine_tune_margin"];
    if (j.contains("fine_tune_crop_seconds")) {
      s.fine_tune_crop_seconds = j["fine_tune_crop_seconds"];
    }
    if (j.contains("fine_tune_lr_start")) s.fine_tune_lr_start = j["fine_tune_lr_start"];
    if (j.contains("fine_tune_lr_end")) s.fine_tune_lr_end = j["fine_tune_lr_end"];
  } catch (const json::exception& e) {
    throw ConfigError(std::string("schedule: bad field: ") + e.what());
  }
  s.validate();
  return s;
}

double schedule_lr(double lr_start, double lr_end, std::size_t warmup_steps,
                   std::size_t t, std::size_t total_steps) {
  if (t == 0) throw InvalidInputError("schedule_lr: steps are 1-based");
  if (warmup_steps > 0 && t <= warmup_steps) {
    return lr_start * static_cast<double>(t) /
           static_cast<double>(warmup_steps);
  }
  if (total_steps <= warmup_steps + 1) return lr_end;
  const double progress =
      static_cast<double>(t - warmup_steps) /
      static_cast<double>(total_steps - warmup_steps);
  return lr_start * std::pow(lr_end / lr_start, std::min(progress, 1.0));
}

AdamOptimizer::AdamOptimizer(std::vector<Parameter*> params,
                             double weight_decay, double beta1, double beta2,
                             double eps)
    : params_(std::move(params)),
      weight_decay_(weight_decay),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Parameter* p : params_) {
    m_.push_back(Tensor::zeros_like(p->value));
    v_.push_back(Tensor::zeros_like(p->value));
  }
}

void AdamOptimizer::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Parameter* p = params_[pi];
    if (!p->trainable) continue;
    Tensor& m = m_[pi];
    Tensor& v = v_[pi];
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const double gr = p->grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gr;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gr * gr;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      double update = lr * mhat / (std::sqrt(vhat) + eps_);
      if (p->decay) update += lr * weight_decay_ * p->value[i];
      p->value[i] -= update;
    }
  }
}

namespace {

// Crops (or circularly wraps) an utterance's cached features to a fixed
// frame count starting at `start`.
Tensor crop_frames(const Tensor& features, std::size_t start,
                   std::size_t length) {
  const std::size_t ch = features.size(1), frames = features.size(2);
  Tensor out({1, ch, length});
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t t = 0; t < length; ++t) {
      out.at3(0, c, t) = features.at3(0, c, (start + t) % frames);
    }
  }
  return out;
}

struct TrainingData {
  std::vector<Tensor> features;       // [1, n_mels, T_i]
  std::vector<std::size_t> labels;
  std::vector<std::string> speaker_order;
};

TrainingData load_training_data(const std::vector<UtteranceRecord>& manifest,
                                std::size_t n_mels) {
  if (manifest.empty()) {
    throw InvalidInputError("train: empty corpus manifest");
  }
  TrainingData data;
  std::map<std::string, std::size_t> speaker_index;
  for (const auto& rec : manifest) {
    if (!speaker_index.count(rec.speaker_id)) {
      const std::size_t idx = speaker_index.size();
      speaker_index[rec.speaker_id] = idx;
    }
  }
  if (speaker_index.size() < 2) {
    throw InvalidInputError("train: need at least 2 speakers");
  }
  data.speaker_order.resize(speaker_index.size());
  for (const auto& [spk, idx] : speaker_index) data.speaker_order[idx] = spk;
  MelOptions mel;
  mel.n_mels = n_mels;
  for (const auto& rec : manifest) {
    Waveform w = read_wav(rec.path);
    data.features.push_back(compute_log_mel(w, mel).data);
    data.labels.push_back(speaker_index[rec.speaker_id]);
  }
  return data;
}

struct StageConfig {
  std::size_t epochs;
  double lr_start, lr_end;
  std::size_t warmup_steps;
  double crop_seconds;
  double margin;
};

void run_stage(const StageConfig& stage, const TrainingData& data,
               DsTdnn& model, AamHead& head, AdamOptimizer& opt,
               const TrainSchedule& schedule, std::uint64_t seed,
               std::uint64_t stage_tag, TrainReport& report,
               std::ofstream* metrics) {
  const std::size_t n = data.features.size();
  const std::size_t batch_size = std::min(schedule.batch_size, n);
  const std::size_t batches_per_epoch = (n + batch_size - 1) / batch_size;
  const std::size_t total_steps = stage.epochs * batches_per_epoch;
  const std::size_t crop = std::max<std::size_t>(
      16, mel_frame_count(
              static_cast<std::size_t>(std::lround(stage.crop_seconds * 16000)),
              16000, 0.025, 0.010));
  head.margin = stage.margin;

  Rng order_rng = make_rng(seed, 0xE0 + stage_tag);
  Rng crop_rng = make_rng(seed, 0xC0 + stage_tag);
  Rng aug_rng = make_rng(seed, 0xA0 + stage_tag);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t step_in_stage = 0;

  for (std::size_t epoch = 1; epoch <= stage.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double epoch_loss = 0.0, epoch_acc = 0.0;
    std::size_t epoch_items = 0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t begin = b * batch_size;
      const std::size_t end = std::min(begin + batch_size, n);
      const std::size_t bsz = end - begin;
      if (bsz == 0) continue;
      ++step_in_stage;

      Tensor batch({bsz, data.features[0].size(1), crop});
      std::vector<std::size_t> labels(bsz);
      for (std::size_t i = 0; i < bsz; ++i) {
        const std::size_t idx = order[begin + i];
        const Tensor& feat = data.features[idx];
        std::uniform_int_distribution<std::size_t> start_dist(
            0, feat.size(2) > crop ? feat.size(2) - crop : 0);
        Tensor cropped = crop_frames(feat, start_dist(crop_rng), crop);
        FeatureMap fm{std::move(cropped), 0.01};
        fm = spec_augment(fm, std::min<std::size_t>(5, crop),
                          std::min<std::size_t>(10, fm.channels()), aug_rng);
        for (std::size_t c = 0; c < fm.channels(); ++c) {
          for (std::size_t t = 0; t < crop; ++t) {
            batch.at3(i, c, t) = fm.data.at3(0, c, t);
          }
        }
        labels[i] = data.labels[idx];
      }

      model.params().zero_grad();
      head.class_weights.zero_grad();
      Graph g;
      ForwardOptions opts;
      opts.training = true;
      opts.mask_seed = split_seed(seed, 0xF000 + stage_tag * 100000 +
                                            step_in_stage);
      Var x = g.input(batch);
      Var emb = model.forward(g, x, opts);
      AamResult result = aam_loss(g, emb, labels, head);
      const double loss = g.val(result.loss)[0];
      if (!std::isfinite(loss)) {
        throw NumericError("train: loss diverged at step " +
                           std::to_string(step_in_stage));
      }
      g.backward(result.loss);

      const Tensor& logits = g.val(result.logits);
      std::size_t correct = 0;
      for (std::size_t i = 0; i < bsz; ++i) {
        std::size_t argmax = 0;
        for (std::size_t j = 1; j < logits.size(1); ++j) {
          if (logits.at2(i, j) > logits.at2(i, argmax)) argmax = j;
        }
        if (argmax == labels[i]) ++correct;
      }
      const double acc = static_cast<double>(correct) / bsz;

      const double lr = schedule_lr(stage.lr_start, stage.lr_end,
                                    stage.warmup_steps, step_in_stage,
                                    total_steps);
      opt.step(lr);

      StepRecord rec{epoch, report.steps.size() + 1, loss, acc, lr};
      report.steps.push_back(rec);
      if (metrics != nullptr) {
        (*metrics) << epoch << ',' << rec.step << ',' << loss << ',' << acc
                   << ',' << lr << '\n';
      }
      epoch_loss += loss * bsz;
      epoch_acc += acc * bsz;
      epoch_items += bsz;
      report.final_loss = loss;
    }
    report.epochs.push_back({epoch, epoch_loss / epoch_items,
                             epoch_acc / epoch_items});
  }
}

}  // namespace

TrainReport train(const std::vector<UtteranceRecord>& manifest, DsTdnn& model,
                  AamHead& head, const TrainSchedule& schedule,
                  std::uint64_t seed, const std::string& metrics_csv_path) {
  schedule.validate();
  TrainingData data = load_training_data(manifest, model.config().n_mels);
  if (head.n_classes() != data.speaker_order.size()) {
    throw InvalidInputError("train: head class count != corpus speakers");
  }

  std::vector<Parameter*> trainable = model.params().trainable();
  trainable.push_back(&head.class_weights);
  AdamOptimizer opt(trainable, schedule.weight_decay);

  std::ofstream metrics;
  if (!metrics_csv_path.empty()) {
    metrics.open(metrics_csv_path, std::ios::trunc);
    if (!metrics) throw IoError("train: cannot open " + metrics_csv_path);
    metrics << "epoch,step,loss,acc,lr\n";
    metrics.setf(std::ios::fmtflags(0), std::ios::floatfield);
    metrics.precision(8);
  }

  TrainReport report;
  report.speaker_order = data.speaker_order;
  const StageConfig pretrain{schedule.epochs, schedule.lr_start,
                             schedule.lr_end, schedule.warmup_steps,
                             schedule.crop_seconds, head.margin};
  run_stage(pretrain, data, model, head, opt, schedule, seed, 0, report,
            metrics.is_open() ? &metrics : nullptr);
  if (schedule.fine_tune) {
    const StageConfig ft{schedule.fine_tune_epochs,
                         schedule.fine_tune_lr_start,
                         schedule.fine_tune_lr_end,
                         /*warmup=*/0,
                         schedule.fine_tune_crop_seconds,
                         schedule.fine_tune_margin};
    run_stage(ft, data, model, head, opt, schedule, seed, 1, report,
              metrics.is_open() ? &metrics : nullptr);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient oracle
// ---------------------------------------------------------------------------

namespace {

double eval_loss(DsTdnn& model, AamHead& head, const Tensor& features,
                 const std::vector<std::size_t>& labels, std::uint64_t seed) {
  Graph g;
  ForwardOptions opts;
  opts.training = true;
  opts.update_bn_stats = false;
  opts.disable_sparse = true;
  opts.mask_seed = seed;
  Var x = g.input(features);
  Var emb = model.forward(g, x, opts);
  AamResult result = aam_loss(g, emb, labels, head);
  return g.val(result.loss)[0];
}

}  // namespace

GradCheckReport finite_diff_check(DsTdnn& model, AamHead& head,
                                  const Tensor& features,
                                  const std::vector<std::size_t>& labels,
                                  std::size_t n_samples, double step_h,
                                  double tolerance, std::uint64_t seed) {
  GradCheckReport report;
  report.tolerance = tolerance;

  std::vector<Parameter*> all = model.params().trainable();
  all.push_back(&head.class_weights);

  // Analytic gradients from a single recorded pass.
  for (Parameter* p : all) p->zero_grad();
  {
    Graph g;
    ForwardOptions opts;
    opts.training = true;
    opts.update_bn_stats = false;
    opts.disable_sparse = true;
    opts.mask_seed = seed;
    Var x = g.input(features);
    Var emb = model.forward(g, x, opts);
    AamResult result = aam_loss(g, emb, labels, head);
    g.backward(result.loss);
  }

  // Round-robin over families so every parameter type is represented.
  std::map<std::string, std::vector<Parameter*>> families;
  for (Parameter* p : all) families[parameter_family(p->name)].push_back(p);
  std::vector<std::string> family_names;
  for (const auto& [fam, list] : families) family_names.push_back(fam);

  Rng rng = make_rng(seed, 0xFD);
  std::size_t checked = 0;
  std::size_t fam_cursor = 0;
  std::size_t attempts = 0;
  const std::size_t max_attempts = 20 * n_samples + 100;
  while (checked < n_samples && attempts < max_attempts) {
    ++attempts;
    const std::string& fam = family_names[fam_cursor % family_names.size()];
    ++fam_cursor;
    const auto& plist = families[fam];
    std::uniform_int_distribution<std::size_t> pidx(0, plist.size() - 1);
    Parameter* p = plist[pidx(rng)];
    std::uniform_int_distribution<std::size_t> eidx(0, p->value.numel() - 1);
    const std::size_t i = eidx(rng);

    const double saved = p->value[i];
    auto probe = [&](double delta) {
      p->value[i] = saved + delta;
      const double l = eval_loss(model, head, features, labels, seed);
      p->value[i] = saved;
      return l;
    };
    const double fd_h = (probe(step_h) - probe(-step_h)) / (2.0 * step_h);
    const double fd_h2 = (probe(step_h / 2) - probe(-step_h / 2)) / step_h;
    // Two step sizes disagreeing flags a non-smooth crossing (ReLU kink or
    // clamp); such probes are invalid oracle points and are redrawn.
    const double fd_scale = std::max({std::abs(fd_h), std::abs(fd_h2), 1e-2});
    if (std::abs(fd_h - fd_h2) / fd_scale > 0.25 * tolerance) {
      ++report.kink_resamples;
      continue;
    }

    const double analytic = p->grad[i];
    const double denom = std::max({std::abs(analytic), std::abs(fd_h2), 1e-2});
    const double rel_err = std::abs(analytic - fd_h2) / denom;
    report.max_rel_err = std::max(report.max_rel_err, rel_err);
    report.family_counts[fam]++;
    if (rel_err > tolerance) {
      report.failures.push_back({p->name, i, analytic, fd_h2, rel_err});
    }
    ++checked;
  }
  report.samples_checked = checked;
  return report;
}

}  // namespace dstdnn
