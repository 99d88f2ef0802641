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

#include "dstdnn/network.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "dstdnn/fft.hpp"

namespace dstdnn {

using json = nlohmann::json;

void ModelConfig::validate() const {
  if (n_mels == 0) throw ConfigError("config: n_mels must be positive");
  if (n_block_pairs == 0) throw ConfigError("config: need at least one block pair");
  if (base_channels % 2 != 0) {
    throw ConfigError("config: base_channels must be even (branch split)");
  }
  if (res2_scales.size() != n_block_pairs ||
      experts.size() != n_block_pairs ||
      sparse_ratio.size() != n_block_pairs) {
    throw ConfigError("config: per-layer lists must have n_block_pairs entries");
  }
  const std::size_t half = branch_channels();
  for (std::size_t s : res2_scales) {
    if (s == 0 || half % s != 0) {
      throw ConfigError("config: branch channels must divide by every scale");
    }
  }
  for (std::size_t k : experts) {
    if (k == 0) throw ConfigError("config: expert counts must be positive");
  }
  for (double r : sparse_ratio) {
    if (r < 0.0 || r > 1.0) {
      throw ConfigError("config: sparse ratios must lie in [0,1]");
    }
  }
  if (mfa_dim == 0 || embedding_dim == 0) {
    throw ConfigError("config: mfa_dim and embedding_dim must be positive");
  }
  if (stem_kernel % 2 == 0 || local_kernel % 2 == 0) {
    throw ConfigError("config: kernels must be odd for same-length padding");
  }
  if (filter_frames < 2) {
    throw ConfigError("config: filter_frames must be at least 2");
  }
}

ModelConfig ModelConfig::toy() {
  ModelConfig cfg;
  cfg.base_channels = 64;
  cfg.res2_scales = {4, 4, 4};
  cfg.experts = {4, 4, 8};
  cfg.sparse_ratio = {0.3, 0.1, 0.1};
  cfg.mfa_dim = 192;
  cfg.embedding_dim = 192;
  return cfg;
}

ModelConfig ModelConfig::variant_s() {
  ModelConfig cfg;
  cfg.base_channels = 512;
  cfg.res2_scales = {4, 4, 4};
  cfg.experts = {4, 4, 8};
  cfg.sparse_ratio = {0.3, 0.1, 0.1};
  cfg.mfa_dim = 1536;
  cfg.embedding_dim = 192;
  return cfg;
}

ModelConfig ModelConfig::variant_b() {
  ModelConfig cfg;
  cfg.base_channels = 1024;
  cfg.res2_scales = {4, 4, 8};
  cfg.experts = {4, 8, 8};
  cfg.sparse_ratio = {0.3, 0.1, 0.1};
  cfg.mfa_dim = 1536;
  cfg.embedding_dim = 192;
  return cfg;
}

ModelConfig ModelConfig::variant_l() {
  ModelConfig cfg;
  cfg.base_channels = 1536;
  cfg.res2_scales = {4, 8, 8};
  cfg.experts = {8, 8, 8};
  cfg.sparse_ratio = {0.4, 0.2, 0.2};
  cfg.mfa_dim = 1536;
  cfg.embedding_dim = 192;
  return cfg;
}

std::string model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["n_mels"] = cfg.n_mels;
  j["n_block_pairs"] = cfg.n_block_pairs;
  j["base_channels"] = cfg.base_channels;
  j["res2_scales"] = cfg.res2_scales;
  j["experts"] = cfg.experts;
  j["sparse_ratio"] = cfg.sparse_ratio;
  j["mfa_dim"] = cfg.mfa_dim;
  j["embedding_dim"] = cfg.embedding_dim;
  j["stem_kernel"] = cfg.stem_kernel;
  j["local_kernel"] = cfg.local_kernel;
  j["fusion_weights"] = {cfg.fusion_weights[0], cfg.fusion_weights[1]};
  j["filter_frames"] = cfg.filter_frames;
  return j.dump(2);
}

ModelConfig model_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  ModelConfig cfg;
  try {
    if (j.contains("n_mels")) cfg.n_mels = j["n_mels"];
    if (j.contains("n_block_pairs")) cfg.n_block_pairs = j["n_block_pairs"];
    if (j.contains("base_channels")) cfg.base_channels = j["base_channels"];
    if (j.contains("res2_scales")) {
      cfg.res2_scales = j["res2_scales"].get<std::vector<std::size_t>>();
    }
    if (j.contains("experts")) {
      cfg.experts = j["experts"].get<std::vector<std::size_t>>();
    }
    if (j.contains("sparse_ratio")) {
      cfg.sparse_ratio = j["sparse_ratio"].get<std::vector<double>>();
    }
    if (j.contains("mfa_dim")) cfg.mfa_dim = j["mfa_dim"];
    if (j.contains("embedding_dim")) cfg.embedding_dim = j["embedding_dim"];
    if (j.contains("stem_kernel")) cfg.stem_kernel = j["stem_kernel"];
    if (j.contains("local_kernel")) cfg.local_kernel = j["local_kernel"];
    if (j.contains("fusion_weights")) {
      cfg.fusion_weights[0] = j["fusion_weights"][0];
      cfg.fusion_weights[1] = j["fusion_weights"][1];
    }
    if (j.contains("filter_frames")) cfg.filter_frames = j["filter_frames"];
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad field: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

namespace {

// All random draws are rounded to float32 so a fresh model survives the
// float32 checkpoint payload bit-exactly.
double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void init_kaiming(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = f32(dist(rng));
}

}  // namespace

namespace layers {

void Conv1dLayer::init(const std::string& name, std::size_t cout,
                       std::size_t cin, std::size_t kernel, Rng& rng,
                       ParameterRegistry& reg) {
  weight = Parameter(name + ".weight", Tensor({cout, cin, kernel}));
  init_kaiming(weight.value, cin * kernel, rng);
  bias = Parameter(name + ".bias", Tensor({cout}), true, /*decay=*/false);
  reg.add(&weight);
  reg.add(&bias);
}

void LinearLayer::init(const std::string& name, std::size_t fout,
                       std::size_t fin, Rng& rng, ParameterRegistry& reg) {
  weight = Parameter(name + ".weight", Tensor({fout, fin}));
  init_kaiming(weight.value, fin, rng);
  bias = Parameter(name + ".bias", Tensor({fout}), true, /*decay=*/false);
  reg.add(&weight);
  reg.add(&bias);
}

void BatchNormLayer::init(const std::string& name, std::size_t channels,
                          ParameterRegistry& reg) {
  gamma = Parameter(name + ".gamma", Tensor({channels}, 1.0), true,
                    /*decay=*/false);
  beta = Parameter(name + ".beta", Tensor({channels}), true, /*decay=*/false);
  run_mean = Parameter(name + ".running_mean", Tensor({channels}),
                       /*trainable=*/false, /*decay=*/false);
  run_var = Parameter(name + ".running_var", Tensor({channels}, 1.0),
                      /*trainable=*/false, /*decay=*/false);
  reg.add(&gamma);
  reg.add(&beta);
  reg.add(&run_mean);
  reg.add(&run_var);
}

Var BatchNormLayer::forward(Graph& g, Var x, const ForwardOptions& opts) {
  const bool batch_stats = opts.training && !opts.freeze_bn_stats;
  const bool update = batch_stats && opts.update_bn_stats;
  return g.batchnorm(x, g.param(gamma), g.param(beta), run_mean.value,
                     run_var.value, batch_stats, update, momentum, eps);
}

void ProjLayer::init(const std::string& name, std::size_t cout,
                     std::size_t cin, Rng& rng, ParameterRegistry& reg) {
  conv.init(name + ".conv", cout, cin, 1, rng, reg);
  bn.init(name + ".bn", cout, reg);
}

Var ProjLayer::forward(Graph& g, Var x, const ForwardOptions& opts) {
  return bn.forward(g, g.relu(conv.forward(g, x)), opts);
}

void Res2ConvLayer::init(const std::string& name, std::size_t channels,
                         std::size_t scales_, std::size_t kernel, Rng& rng,
                         ParameterRegistry& reg) {
  scales = scales_;
  if (scales == 0 || channels % scales != 0) {
    throw ConfigError("res2conv: channels must divide into scale groups");
  }
  group_channels = channels / scales;
  convs.resize(scales > 0 ? scales - 1 : 0);
  bns.resize(convs.size());
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const std::string base = name + ".g" + std::to_string(i + 2);
    convs[i].init(base + ".conv", group_channels, group_channels, kernel, rng,
                  reg);
    bns[i].init(base + ".bn", group_channels, reg);
  }
}

Var Res2ConvLayer::forward(Graph& g, Var x, const ForwardOptions& opts) {
  if (scales == 1) return x;  // single passthrough group
  std::vector<Var> outs;
  outs.reserve(scales);
  Var first = g.slice_channels(x, 0, group_channels);
  outs.push_back(first);
  Var prev = first;
  for (std::size_t i = 1; i < scales; ++i) {
    Var group =
        g.slice_channels(x, i * group_channels, (i + 1) * group_channels);
    Var h = convs[i - 1].forward(g, g.add(group, prev));
    Var y = g.relu(bns[i - 1].forward(g, h, opts));
    outs.push_back(y);
    prev = y;
  }
  return g.concat_channels(outs);
}

void SELayer::init(const std::string& name, std::size_t channels, Rng& rng,
                   ParameterRegistry& reg) {
  const std::size_t bottleneck = std::max<std::size_t>(4, channels / 16);
  fc1.init(name + ".fc1", bottleneck, channels, rng, reg);
  fc2.init(name + ".fc2", channels, bottleneck, rng, reg);
}

Var SELayer::forward(Graph& g, Var x) {
  Var pooled = g.gap_frames(x);
  Var h = g.relu(fc1.forward(g, pooled));
  Var gates = g.sigmoid(fc2.forward(g, h));
  return g.bchan_scale(x, gates);
}

void DgfLayer::init(const std::string& name, std::size_t experts,
                    std::size_t channels, std::size_t bins, double ratio,
                    std::size_t layer_index_, Rng& rng,
                    ParameterRegistry& reg) {
  sparse_ratio = ratio;
  layer_index = layer_index_;
  filters = Parameter(name + ".filters", Tensor({experts, channels, bins, 2}));
  std::normal_distribution<double> dist(0.0, 0.02);
  for (std::size_t i = 0; i < filters.value.numel(); ++i) {
    filters.value[i] = f32(dist(rng));
  }
  reg.add(&filters);
  fc1.init(name + ".scorer.fc1", experts, channels, rng, reg);
  fc2.init(name + ".scorer.fc2", experts, experts, rng, reg);
}

Var DgfLayer::forward(Graph& g, Var x, const ForwardOptions& opts) {
  Var scores = build_attention_scores(g, x, g.param(fc1.weight),
                                      g.param(fc1.bias), g.param(fc2.weight),
                                      g.param(fc2.bias));
  Var bank = g.param(filters);
  const bool masked = opts.training && !opts.disable_sparse &&
                      sparse_ratio > 0.0;
  if (!masked) {
    return build_dgf_modulation(g, x, bank, scores, nullptr, nullptr);
  }
  Rng rng = make_rng(opts.mask_seed, 0x5Fu + layer_index);
  SparseMask mask = sample_sparse_mask(g.val(x).size(0), g.val(x).size(1),
                                       sparse_ratio, rng);
  return build_dgf_modulation(g, x, bank, scores, &mask, nullptr);
}

void LocalBlock::init(const std::string& name, std::size_t channels,
                      std::size_t scales, std::size_t kernel, Rng& rng,
                      ParameterRegistry& reg) {
  proj_in.init(name + ".proj_in", channels, channels, rng, reg);
  res2.init(name + ".res2", channels, scales, kernel, rng, reg);
  proj_out.init(name + ".proj_out", channels, channels, rng, reg);
  se.init(name + ".se", channels, rng, reg);
}

Var LocalBlock::forward(Graph& g, Var x, const ForwardOptions& opts) {
  Var h = proj_in.forward(g, x, opts);
  h = res2.forward(g, h, opts);
  h = proj_out.forward(g, h, opts);
  return se.forward(g, h);
}

void GlobalBlock::init(const std::string& name, std::size_t channels,
                       std::size_t experts, std::size_t bins, double ratio,
                       std::size_t layer_index, Rng& rng,
                       ParameterRegistry& reg) {
  proj_in.init(name + ".proj_in", channels, channels, rng, reg);
  dgf.init(name + ".dgf", experts, channels, bins, ratio, layer_index, rng,
           reg);
  proj_out.init(name + ".proj_out", channels, channels, rng, reg);
}

Var GlobalBlock::forward(Graph& g, Var x, const ForwardOptions& opts) {
  Var h = proj_in.forward(g, x, opts);
  h = dgf.forward(g, h, opts);
  h = proj_out.forward(g, h, opts);
  return g.add(h, x);  // skip spans the whole block
}

void AspLayer::init(const std::string& name, std::size_t channels, Rng& rng,
                    ParameterRegistry& reg) {
  att_hidden.init(name + ".hidden", channels, channels, 1, rng, reg);
  att_score.init(name + ".score", 1, channels, 1, rng, reg);
}

Var AspLayer::forward(Graph& g, Var h) {
  const std::size_t frames = g.val(h).size(2);
  if (frames < 2) {
    throw InvalidInputError("asp_pool: need at least 2 frames");
  }
  Var e = att_score.forward(g, g.tanh_act(att_hidden.forward(g, h)));
  Var alpha = g.softmax_rows(
      g.reshape(e, {g.val(e).size(0), frames}));
  Var mu = g.weighted_pool(h, alpha);
  Var m2 = g.weighted_pool(g.mul(h, h), alpha);
  Var sigma = g.sqrt_floor(g.sub(m2, g.mul(mu, mu)), 1e-9);
  return g.concat_features(mu, sigma);
}

}  // namespace layers

DsTdnn::DsTdnn(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng = make_rng(init_seed, 0xD5);
  const std::size_t half = cfg_.branch_channels();
  const std::size_t bins = fft::rfft_bins(cfg_.filter_frames);

  stem_conv_.init("stem.conv", cfg_.base_channels, cfg_.n_mels,
                  cfg_.stem_kernel, rng, registry_);
  stem_bn_.init("stem.bn", cfg_.base_channels, registry_);

  local_blocks_.resize(cfg_.n_block_pairs);
  global_blocks_.resize(cfg_.n_block_pairs);
  for (std::size_t i = 0; i < cfg_.n_block_pairs; ++i) {
    const std::string idx = std::to_string(i + 1);
    local_blocks_[i].init("local" + idx, half, cfg_.res2_scales[i],
                          cfg_.local_kernel, rng, registry_);
    global_blocks_[i].init("global" + idx, half, cfg_.experts[i], bins,
                           cfg_.sparse_ratio[i], i, rng, registry_);
  }

  mfa_.init("mfa", cfg_.mfa_dim, cfg_.n_block_pairs * cfg_.base_channels, rng,
            registry_);
  asp_.init("asp", cfg_.mfa_dim, rng, registry_);
  embed_bn_.init("embed.bn", 2 * cfg_.mfa_dim, registry_);
  embed_proj_.init("embed.proj", cfg_.embedding_dim, 2 * cfg_.mfa_dim, rng,
                   registry_);
}

Var DsTdnn::forward(Graph& g, Var features, const ForwardOptions& opts) {
  const Tensor& x = g.val(features);
  if (x.rank() != 3) throw ShapeError("forward: features must be [B,C,T]");
  if (x.size(1) != cfg_.n_mels) {
    throw ShapeError("forward: expected " + std::to_string(cfg_.n_mels) +
                     " input channels");
  }
  if (x.size(2) < 2) throw InvalidInputError("forward: need T >= 2");

  Var stem = stem_bn_.forward(g, g.relu(stem_conv_.forward(g, features)), opts);
  const std::size_t half = cfg_.branch_channels();
  Var local = g.slice_channels(stem, 0, half);
  Var global = g.slice_channels(stem, half, 2 * half);

  const double w_self = cfg_.fusion_weights[0];
  const double w_other = cfg_.fusion_weights[1];
  std::vector<Var> locals, globals;
  for (std::size_t i = 0; i < cfg_.n_block_pairs; ++i) {
    Var local_in = g.axpby(w_self, local, w_other, global);
    Var global_in = g.axpby(w_other, local, w_self, global);
    local = local_blocks_[i].forward(g, local_in, opts);
    global = global_blocks_[i].forward(g, global_in, opts);
    locals.push_back(local);
    globals.push_back(global);
  }

  std::vector<Var> all = locals;
  all.insert(all.end(), globals.begin(), globals.end());
  Var aggregated = mfa_.forward(g, g.concat_channels(all), opts);
  Var pooled = asp_.forward(g, aggregated);
  Var normed = embed_bn_.forward(g, pooled, opts);
  return embed_proj_.forward(g, normed);
}

Tensor DsTdnn::embed(const Tensor& features, const ForwardOptions& opts) {
  Graph g;
  Var x = g.input(features);
  Var out = forward(g, x, opts);
  return g.val(out);
}

std::size_t count_parameters(const ModelConfig& cfg) {
  DsTdnn model(cfg, /*init_seed=*/0);
  std::size_t count = 0;
  for (const Parameter* p : model.params().all()) {
    if (p->trainable) count += p->value.numel();
  }
  return count;
}

std::string parameter_family(const std::string& name) {
  auto has = [&name](const char* s) {
    return name.find(s) != std::string::npos;
  };
  if (name.size() >= 6 && (has(".gamma") || has(".beta"))) return "bn_affine";
  if (has(".dgf.filters")) return "filter";
  if (has(".scorer.")) return "scorer";
  if (has(".res2.")) return "res2conv";
  if (has(".se.")) return "se";
  if (name.rfind("stem.", 0) == 0) return "stem";
  if (has(".proj_in.") || has(".proj_out.")) return "projection";
  if (name.rfind("mfa.", 0) == 0) return "mfa";
  if (name.rfind("asp.", 0) == 0) return "asp";
  if (name.rfind("embed.", 0) == 0) return "embed";
  if (name.rfind("aam.", 0) == 0) return "aam";
  return "other";
}

}  // namespace dstdnn
