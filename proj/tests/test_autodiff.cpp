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
#include <functional>

#include "dstdnn/autodiff.hpp"
#include "dstdnn/dynamic_filter.hpp"
#include "test_util.hpp"

using namespace dstdnn;

namespace {

// Checks d(sum(w .* f(inputs)))/d(input) against central differences for
// every input scalar. The projection weights w are fixed random values so
// all output entries contribute with distinct sensitivities.
void check_gradients(
    std::vector<Tensor> inputs,
    const std::function<Var(Graph&, const std::vector<Var>&)>& build,
    double h = 1e-5, double tol = 1e-5) {
  std::mt19937_64 rng(99);

  auto eval = [&](const std::vector<Tensor>& vals, Tensor* weights,
                  std::vector<Tensor>* grads) {
    Graph g;
    std::vector<Var> vars;
    for (const Tensor& t : vals) vars.push_back(g.input(t, true));
    Var out = build(g, vars);
    if (weights->numel() == 0) {
      *weights = testutil::random_tensor(g.val(out).shape(), rng);
    }
    Var loss = g.sum_all(g.mul(out, g.input(*weights)));
    const double value = g.val(loss)[0];
    if (grads != nullptr) {
      g.backward(loss);
      grads->clear();
      for (Var v : vars) grads->push_back(g.grad(v));
    }
    return value;
  };

  Tensor weights;
  std::vector<Tensor> analytic;
  eval(inputs, &weights, &analytic);

  for (std::size_t vi = 0; vi < inputs.size(); ++vi) {
    for (std::size_t i = 0; i < inputs[vi].numel(); ++i) {
      const double saved = inputs[vi][i];
      inputs[vi][i] = saved + h;
      const double up = eval(inputs, &weights, nullptr);
      inputs[vi][i] = saved - h;
      const double down = eval(inputs, &weights, nullptr);
      inputs[vi][i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double a = analytic[vi][i];
      const double err =
          std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1.0});
      INFO("input ", vi, " element ", i, " analytic ", a, " fd ", fd);
      CHECK(err < tol);
    }
  }
}

Tensor rand_t(std::vector<std::size_t> shape, double scale = 1.0,
              std::uint64_t seed = 42) {
  std::mt19937_64 rng(seed);
  return testutil::random_tensor(std::move(shape), rng, scale);
}

}  // namespace

TEST_CASE("elementwise op gradients match finite differences") {
  check_gradients({rand_t({2, 3}), rand_t({2, 3}, 1.0, 43)},
                  [](Graph& g, const std::vector<Var>& v) {
                    return g.mul(g.axpby(0.8, v[0], 0.2, v[1]),
                                 g.tanh_act(v[1]));
                  });
  check_gradients({rand_t({2, 5})}, [](Graph& g, const std::vector<Var>& v) {
    return g.sigmoid(g.scale(v[0], 1.7));
  });
  // Keep inputs away from the ReLU kink.
  Tensor x = rand_t({3, 4});
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (std::abs(x[i]) < 0.05) x[i] = 0.1;
  }
  check_gradients({x}, [](Graph& g, const std::vector<Var>& v) {
    return g.relu(v[0]);
  });
  // sqrt_floor above the floor.
  Tensor pos = rand_t({2, 6});
  for (std::size_t i = 0; i < pos.numel(); ++i) pos[i] = 0.5 + std::abs(pos[i]);
  check_gradients({pos}, [](Graph& g, const std::vector<Var>& v) {
    return g.sqrt_floor(v[0], 1e-9);
  });
}

TEST_CASE("conv1d gradients match finite differences") {
  check_gradients(
      {rand_t({2, 3, 7}), rand_t({4, 3, 3}, 0.5, 44), rand_t({4}, 0.5, 45)},
      [](Graph& g, const std::vector<Var>& v) {
        return g.conv1d(v[0], v[1], v[2]);
      });
  // Kernel 1 (projection) and kernel 7 (stem width).
  check_gradients(
      {rand_t({1, 2, 5}), rand_t({3, 2, 1}, 0.5, 46), rand_t({3}, 0.5, 47)},
      [](Graph& g, const std::vector<Var>& v) {
        return g.conv1d(v[0], v[1], v[2]);
      });
  check_gradients(
      {rand_t({1, 2, 9}), rand_t({2, 2, 7}, 0.5, 48), rand_t({2}, 0.5, 49)},
      [](Graph& g, const std::vector<Var>& v) {
        return g.conv1d(v[0], v[1], v[2]);
      });
}

TEST_CASE("batchnorm gradients match finite differences (both modes)") {
  for (bool batch_stats : {true, false}) {
    Tensor rm({4});
    Tensor rv({4}, 1.0);
    for (std::size_t i = 0; i < 4; ++i) rm[i] = 0.1 * static_cast<double>(i);
    check_gradients(
        {rand_t({3, 4, 5}), rand_t({4}, 0.5, 50), rand_t({4}, 0.5, 51)},
        [&rm, &rv, batch_stats](Graph& g, const std::vector<Var>& v) {
          return g.batchnorm(v[0], v[1], v[2], rm, rv, batch_stats,
                             /*update=*/false, 0.1, 1e-5);
        });
    // Feature-rank variant [B, F].
    Tensor rm2({3}), rv2({3}, 1.0);
    check_gradients(
        {rand_t({4, 3}), rand_t({3}, 0.5, 52), rand_t({3}, 0.5, 53)},
        [&rm2, &rv2, batch_stats](Graph& g, const std::vector<Var>& v) {
          return g.batchnorm(v[0], v[1], v[2], rm2, rv2, batch_stats,
                             /*update=*/false, 0.1, 1e-5);
        });
  }
}

TEST_CASE("shape-moving op gradients match finite differences") {
  check_gradients({rand_t({2, 6, 4})}, [](Graph& g, const std::vector<Var>& v) {
    Var a = g.slice_channels(v[0], 0, 3);
    Var b = g.slice_channels(v[0], 3, 6);
    return g.concat_channels({b, a});
  });
  check_gradients({rand_t({3, 4}), rand_t({3, 2}, 1.0, 54)},
                  [](Graph& g, const std::vector<Var>& v) {
                    return g.concat_features(v[0], v[1]);
                  });
  check_gradients({rand_t({2, 3, 8})}, [](Graph& g, const std::vector<Var>& v) {
    return g.gap_frames(v[0]);
  });
  check_gradients({rand_t({2, 12})}, [](Graph& g, const std::vector<Var>& v) {
    return g.reshape(v[0], {2, 3, 4});
  });
}

TEST_CASE("linear, matmul and softmax gradients match finite differences") {
  check_gradients(
      {rand_t({3, 4}), rand_t({2, 4}, 0.5, 55), rand_t({2}, 0.5, 56)},
      [](Graph& g, const std::vector<Var>& v) {
        return g.linear(v[0], v[1], v[2]);
      });
  check_gradients({rand_t({2, 5}), rand_t({3, 5}, 0.7, 57)},
                  [](Graph& g, const std::vector<Var>& v) {
                    return g.matmul_nt(v[0], v[1]);
                  });
  check_gradients({rand_t({3, 6})}, [](Graph& g, const std::vector<Var>& v) {
    return g.softmax_rows(v[0]);
  });
}

TEST_CASE("pooling and gating gradients match finite differences") {
  check_gradients({rand_t({2, 3, 5}), rand_t({2, 3}, 0.8, 58)},
                  [](Graph& g, const std::vector<Var>& v) {
                    return g.bchan_scale(v[0], v[1]);
                  });
  check_gradients({rand_t({2, 4, 6}), rand_t({2, 6}, 0.8, 59)},
                  [](Graph& g, const std::vector<Var>& v) {
                    return g.weighted_pool(v[0], v[1]);
                  });
  Tensor x = rand_t({3, 5});
  check_gradients({x}, [](Graph& g, const std::vector<Var>& v) {
    return g.row_l2_normalize(v[0]);
  });
}

TEST_CASE("spectral op gradients match finite differences") {
  for (std::size_t frames : {6u, 7u}) {
    check_gradients({rand_t({2, 2, frames})},
                    [](Graph& g, const std::vector<Var>& v) {
                      return g.rfft_frames(v[0]);
                    });
    const std::size_t bins = frames / 2 + 1;
    check_gradients({rand_t({2, 2, bins, 2})},
                    [frames](Graph& g, const std::vector<Var>& v) {
                      return g.irfft_frames(v[0], frames);
                    });
    // Round trip x -> spectrum -> filter -> signal.
    check_gradients(
        {rand_t({1, 2, frames}), rand_t({2, bins, 2}, 0.7, 60)},
        [frames](Graph& g, const std::vector<Var>& v) {
          return g.irfft_frames(g.cmul(g.rfft_frames(v[0]), v[1]), frames);
        });
  }
  check_gradients({rand_t({2, 3, 5, 2}), rand_t({2, 3, 5, 2}, 0.7, 61)},
                  [](Graph& g, const std::vector<Var>& v) {
                    return g.cmul(v[0], v[1]);
                  });
  check_gradients({rand_t({3, 2, 4, 2}), rand_t({2, 3}, 0.5, 62)},
                  [](Graph& g, const std::vector<Var>& v) {
                    return g.mix_filters(v[0], g.softmax_rows(v[1]));
                  });
  for (std::size_t new_bins : {4u, 9u, 5u}) {
    check_gradients({rand_t({2, 5, 2})},
                    [new_bins](Graph& g, const std::vector<Var>& v) {
                      return g.interp_bins(v[0], new_bins);
                    });
  }
}

TEST_CASE("sparse_apply gradients: active rows complex, inactive detached") {
  Tensor mask({2, 3});
  mask.at2(0, 0) = 1.0;
  mask.at2(0, 1) = 0.0;
  mask.at2(0, 2) = 1.0;
  mask.at2(1, 0) = 0.0;
  mask.at2(1, 1) = 1.0;
  mask.at2(1, 2) = 0.0;
  Tensor lambda({2});
  lambda[0] = 0.7;
  lambda[1] = 1.3;
  check_gradients({rand_t({2, 3, 4, 2}), rand_t({2, 3, 4, 2}, 0.7, 63)},
                  [&mask, &lambda](Graph& g, const std::vector<Var>& v) {
                    return g.sparse_apply(v[0], v[1], mask, lambda);
                  });
  // Deactivated rows must leave the filter untouched in the backward pass.
  Graph g;
  Var spec = g.input(rand_t({2, 3, 4, 2}), true);
  Var fd = g.input(rand_t({2, 3, 4, 2}, 0.7, 64), true);
  Var out = g.sparse_apply(spec, fd, mask, lambda);
  g.backward(g.sum_all(out));
  const Tensor& gfd = g.grad(fd);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t c = 0; c < 3; ++c) {
      if (mask.at2(b, c) != 0.0) continue;
      for (std::size_t k = 0; k < 4; ++k) {
        CHECK(gfd.at4(b, c, k, 0) == 0.0);
        CHECK(gfd.at4(b, c, k, 1) == 0.0);
      }
    }
  }
}

TEST_CASE("loss op gradients match finite differences") {
  const std::vector<std::size_t> labels{1, 0, 2};
  // Cosines strictly inside (-1, 1) keep the margin path smooth.
  Tensor cos({3, 4});
  std::mt19937_64 rng(65);
  std::uniform_real_distribution<double> dist(-0.85, 0.85);
  for (std::size_t i = 0; i < cos.numel(); ++i) cos[i] = dist(rng);
  check_gradients({cos}, [&labels](Graph& g, const std::vector<Var>& v) {
    return g.aam_margin(v[0], labels, 0.2, 30.0);
  });

  Graph g;
  Var logits = g.input(rand_t({3, 5}, 2.0, 66), true);
  Var loss = g.cross_entropy(logits, labels);
  g.backward(loss);
  const Tensor analytic = g.grad(logits);
  Tensor base = rand_t({3, 5}, 2.0, 66);
  const double h = 1e-6;
  for (std::size_t i = 0; i < base.numel(); ++i) {
    auto eval = [&](double delta) {
      Tensor t = base;
      t[i] += delta;
      Graph g2;
      Var z = g2.input(t);
      return g2.val(g2.cross_entropy(z, labels))[0];
    };
    const double fd = (eval(h) - eval(-h)) / (2.0 * h);
    CHECK(std::abs(fd - analytic[i]) < 1e-6);
  }
}

TEST_CASE("identity spectral path propagates an all-ones gradient") {
  // All-pass filter: loss = sum(irfft(1 * rfft(x))) = sum(x), so dL/dx = 1.
  const std::size_t frames = 10;
  Tensor filt({2, frames / 2 + 1, 2});
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t k = 0; k < frames / 2 + 1; ++k) {
      filt.at3(c, k, 0) = 1.0;
    }
  }
  Graph g;
  Var x = g.input(rand_t({1, 2, frames}), true);
  Var out = g.irfft_frames(g.cmul(g.rfft_frames(x), g.input(filt)), frames);
  g.backward(g.sum_all(out));
  const Tensor& gx = g.grad(x);
  for (std::size_t i = 0; i < gx.numel(); ++i) {
    CHECK(gx[i] == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("gradients of a batch-summed loss add per-item gradients") {
  Tensor both = rand_t({2, 3, 6});
  Tensor w({4, 3, 3});
  w = rand_t({4, 3, 3}, 0.5, 67);
  Tensor b = rand_t({4}, 0.5, 68);

  auto grad_for = [&](const Tensor& input) {
    Graph g;
    Var wv = g.input(w, true);
    Var out = g.conv1d(g.input(input), wv, g.input(b, true));
    g.backward(g.sum_all(out));
    return g.grad(wv);
  };

  Tensor item0({1, 3, 6}), item1({1, 3, 6});
  for (std::size_t i = 0; i < item0.numel(); ++i) {
    item0[i] = both[i];
    item1[i] = both[item0.numel() + i];
  }
  const Tensor g_both = grad_for(both);
  const Tensor g0 = grad_for(item0);
  const Tensor g1 = grad_for(item1);
  for (std::size_t i = 0; i < g_both.numel(); ++i) {
    CHECK(g_both[i] == doctest::Approx(g0[i] + g1[i]).epsilon(1e-10));
  }
}
