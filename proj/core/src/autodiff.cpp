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

#include "dstdnn/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "dstdnn/fft.hpp"

namespace dstdnn {

namespace {

void check_shape(bool ok, const char* what) {
  if (!ok) throw ShapeError(std::string("autodiff: ") + what);
}

}  // namespace

Graph::Var Graph::emit(Tensor value, bool needs_grad,
                       std::function<void(Graph&)> backward_fn) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.backward_fn = std::move(backward_fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad_buf(int id) {
  Node& n = nodes_[id];
  if (n.grad.numel() == 0) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Graph::add_to_grad(int id, const Tensor& delta) {
  Tensor& g = grad_buf(id);
  for (std::size_t i = 0; i < g.numel(); ++i) g[i] += delta[i];
}

const Tensor& Graph::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.numel() == 0) {
    throw ContractViolationError("gradient requested before backward()");
  }
  return n.grad;
}

Graph::Var Graph::input(Tensor value, bool requires_grad) {
  return emit(std::move(value), requires_grad, nullptr);
}

Graph::Var Graph::param(Parameter& p) {
  Var v = emit(p.value, p.trainable, nullptr);
  Node& n = nodes_[v.id];
  n.parameter = &p;
  if (p.trainable) {
    int id = v.id;
    n.backward_fn = [id](Graph& g) {
      Node& self = g.nodes_[id];
      const Tensor& gr = g.grad_buf(id);
      for (std::size_t i = 0; i < gr.numel(); ++i) {
        self.parameter->grad[i] += gr[i];
      }
    };
  }
  return v;
}

void Graph::backward(Var loss) {
  check_shape(val(loss).numel() == 1, "backward from non-scalar");
  if (!nodes_[loss.id].needs_grad) {
    throw ContractViolationError(
        "backward() on a graph with no recorded gradient path");
  }
  grad_buf(loss.id)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || !n.backward_fn) continue;
    if (n.grad.numel() == 0) continue;  // not reached from the loss
    n.backward_fn(*this);
  }
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

Graph::Var Graph::add(Var a, Var b) { return axpby(1.0, a, 1.0, b); }
Graph::Var Graph::sub(Var a, Var b) { return axpby(1.0, a, -1.0, b); }

Graph::Var Graph::axpby(double alpha, Var a, double beta, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  check_shape(ta.same_shape(tb), "axpby shape mismatch");
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = alpha * ta[i] + beta * tb[i];
  }
  bool ng = requires_grad(a) || requires_grad(b);
  int ia = a.id, ib = b.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), ng, [ia, ib, self, alpha, beta](Graph& g) {
    const Tensor& gr = g.grad_buf(self);
    if (g.nodes_[ia].needs_grad) {
      Tensor& ga = g.grad_buf(ia);
      for (std::size_t i = 0; i < gr.numel(); ++i) ga[i] += alpha * gr[i];
    }
    if (g.nodes_[ib].needs_grad) {
      Tensor& gb = g.grad_buf(ib);
      for (std::size_t i = 0; i < gr.numel(); ++i) gb[i] += beta * gr[i];
    }
  });
}

Graph::Var Graph::mul(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  check_shape(ta.same_shape(tb), "mul shape mismatch");
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = ta[i] * tb[i];
  bool ng = requires_grad(a) || requires_grad(b);
  int ia = a.id, ib = b.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), ng, [ia, ib, self](Graph& g) {
    const Tensor& gr = g.grad_buf(self);
    const Tensor& ta = g.nodes_[ia].value;
    const Tensor& tb = g.nodes_[ib].value;
    if (g.nodes_[ia].needs_grad) {
      Tensor& ga = g.grad_buf(ia);
      for (std::size_t i = 0; i < gr.numel(); ++i) ga[i] += gr[i] * tb[i];
    }
    if (g.nodes_[ib].needs_grad) {
      Tensor& gb = g.grad_buf(ib);
      for (std::size_t i = 0; i < gr.numel(); ++i) gb[i] += gr[i] * ta[i];
    }
  });
}

Graph::Var Graph::scale(Var a, double c) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = c * ta[i];
  int ia = a.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), requires_grad(a), [ia, self, c](Graph& g) {
    if (!g.nodes_[ia].needs_grad) return;
    const Tensor& gr = g.grad_buf(self);
    Tensor& ga = g.grad_buf(ia);
    for (std::size_t i = 0; i < gr.numel(); ++i) ga[i] += c * gr[i];
  });
}

Graph::Var Graph::relu(Var a) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::max(0.0, ta[i]);
  int ia = a.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), requires_grad(a), [ia, self](Graph& g) {
    if (!g.nodes_[ia].needs_grad) return;
    const Tensor& gr = g.grad_buf(self);
    const Tensor& ta = g.nodes_[ia].value;
    Tensor& ga = g.grad_buf(ia);
    for (std::size_t i = 0; i < gr.numel(); ++i) {
      if (ta[i] > 0.0) ga[i] += gr[i];
    }
  });
}

Graph::Var Graph::tanh_act(Var a) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(ta[i]);
  int ia = a.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), requires_grad(a), [ia, self](Graph& g) {
    if (!g.nodes_[ia].needs_grad) return;
    const Tensor& gr = g.grad_buf(self);
    const Tensor& y = g.nodes_[self].value;
    Tensor& ga = g.grad_buf(ia);
    for (std::size_t i = 0; i < gr.numel(); ++i) {
      ga[i] += gr[i] * (1.0 - y[i] * y[i]);
    }
  });
}

Graph::Var Graph::sigmoid(Var a) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = 1.0 / (1.0 + std::exp(-ta[i]));
  }
  int ia = a.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), requires_grad(a), [ia, self](Graph& g) {
    if (!g.nodes_[ia].needs_grad) return;
    const Tensor& gr = g.grad_buf(self);
    const Tensor& y = g.nodes_[self].value;
    Tensor& ga = g.grad_buf(ia);
    for (std::size_t i = 0; i < gr.numel(); ++i) {
      ga[i] += gr[i] * y[i] * (1.0 - y[i]);
    }
  });
}

Graph::Var Graph::sqrt_floor(Var a, double floor) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = std::sqrt(std::max(ta[i], floor));
  }
  int ia = a.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), requires_grad(a), [ia, self, floor](Graph& g) {
    if (!g.nodes_[ia].needs_grad) return;
    const Tensor& gr = g.grad_buf(self);
    const Tensor& ta = g.nodes_[ia].value;
    const Tensor& y = g.nodes_[self].value;
    Tensor& ga = g.grad_buf(ia);
    for (std::size_t i = 0; i < gr.numel(); ++i) {
      if (ta[i] > floor) ga[i] += gr[i] * 0.5 / y[i];
    }
  });
}

Graph::Var Graph::reshape(Var a, std::vector<std::size_t> shape) {
  Tensor out = val(a).reshaped(shape);
  int ia = a.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), requires_grad(a), [ia, self](Graph& g) {
    if (!g.nodes_[ia].needs_grad) return;
    const Tensor& gr = g.grad_buf(self);
    Tensor& ga = g.grad_buf(ia);
    for (std::size_t i = 0; i < gr.numel(); ++i) ga[i] += gr[i];
  });
}

// ---------------------------------------------------------------------------
// Neural-network ops
// ---------------------------------------------------------------------------

Graph::Var Graph::conv1d(Var x, Var w, Var b) {
  const Tensor& tx = val(x);
  const Tensor& tw = val(w);
  const Tensor& tb = val(b);
  check_shape(tx.rank() == 3 && tw.rank() == 3 && tb.rank() == 1,
              "conv1d rank");
  const std::size_t batch = tx.size(0), cin = tx.size(1), frames = tx.size(2);
  const std::size_t cout = tw.size(0), k = tw.size(2);
  check_shape(tw.size(1) == cin, "conv1d channel mismatch");
  check_shape(tb.size(0) == cout, "conv1d bias mismatch");
  check_shape(k % 2 == 1, "conv1d kernel must be odd for same padding");
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::ptrdiff_t tt = static_cast<std::ptrdiff_t>(frames);

  Tensor out({batch, cout, frames});
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t o = 0; o < cout; ++o) {
      double* orow = out.data() + (bi * cout + o) * frames;
      const double bias = tb[o];
      for (std::size_t t = 0; t < frames; ++t) orow[t] = bias;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* xrow = tx.data() + (bi * cin + ci) * frames;
        const double* wrow = tw.data() + (o * cin + ci) * k;
        for (std::size_t j = 0; j < k; ++j) {
          const double wj = wrow[j];
          const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - pad;
          const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -off);
          const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(tt, tt - off);
          for (std::ptrdiff_t t = t0; t < t1; ++t) {
            orow[t] += wj * xrow[t + off];
          }
        }
      }
    }
  }

  bool ng = requires_grad(x) || requires_grad(w) || requires_grad(b);
  int ix = x.id, iw = w.id, ib = b.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), ng, [=](Graph& g) {
    const Tensor& gr = g.grad_buf(self);
    const Tensor& tx = g.nodes_[ix].value;
    const Tensor& tw = g.nodes_[iw].value;
    const bool need_x = g.nodes_[ix].needs_grad;
    const bool need_w = g.nodes_[iw].needs_grad;
    const bool need_b = g.nodes_[ib].needs_grad;
    Tensor* gx = need_x ? &g.grad_buf(ix) : nullptr;
    Tensor* gw = need_w ? &g.grad_buf(iw) : nullptr;
    Tensor* gb = need_b ? &g.grad_buf(ib) : nullptr;
    for (std::size_t bi = 0; bi < batch; ++bi) {
      for (std::size_t o = 0; o < cout; ++o) {
        const double* grow = gr.data() + (bi * cout + o) * frames;
        if (need_b) {
          double s = 0.0;
          for (std::size_t t = 0; t < frames; ++t) s += grow[t];
          (*gb)[o] += s;
        }
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double* xrow = tx.data() + (bi * cin + ci) * frames;
          const double* wrow = tw.data() + (o * cin + ci) * k;
          double* gxrow = need_x ? gx->data() + (bi * cin + ci) * frames
                                 : nullptr;
          double* gwrow = need_w ? gw->data() + (o * cin + ci) * k : nullptr;
          for (std::size_t j = 0; j < k; ++j) {
            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - pad;
            const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -off);
            const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(tt, tt - off);
            if (need_w) {
              double s = 0.0;
              for (std::ptrdiff_t t = t0; t < t1; ++t) {
                s += grow[t] * xrow[t + off];
              }
              gwrow[j] += s;
            }
            if (need_x) {
              const double wj = wrow[j];
              for (std::ptrdiff_t t = t0; t < t1; ++t) {
                gxrow[t + off] += wj * grow[t];
              }
            }
          }
        }
      }
    }
  });
}

Graph::Var Graph::batchnorm(Var x, Var gamma, Var beta, Tensor& running_mean,
                            Tensor& running_var, bool use_batch_stats,
                            bool update_running, double momentum, double eps) {
  const Tensor& tx = val(x);
  check_shape(tx.rank() == 2 || tx.rank() == 3, "batchnorm rank");
  const std::size_t batch = tx.size(0);
  const std::size_t ch = tx.size(1);
  const std::size_t frames = tx.rank() == 3 ? tx.size(2) : 1;
  check_shape(val(gamma).numel() == ch && val(beta).numel() == ch,
              "batchnorm affine size");
  check_shape(running_mean.numel() == ch && running_var.numel() == ch,
              "batchnorm running-stat size");
  const std::size_t m = batch * frames;

  std::vector<double> mean(ch), inv(ch);
  if (use_batch_stats) {
    std::vector<double> var(ch, 0.0);
    for (std::size_t c = 0; c < ch; ++c) {
      double s = 0.0;
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const double* row = tx.data() + (bi * ch + c) * frames;
        for (std::size_t t = 0; t < frames; ++t) s += row[t];
      }
      mean[c] = s / static_cast<double>(m);
      double v = 0.0;
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const double* row = tx.data() + (bi * ch + c) * frames;
        for (std::size_t t = 0; t < frames; ++t) {
          const double d = row[t] - mean[c];
          v += d * d;
        }
      }
      var[c] = v / static_cast<double>(m);
      inv[c] = 1.0 / std::sqrt(var[c] + eps);
    }
    if (update_running) {
      for (std::size_t c = 0; c < ch; ++c) {
        running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean[c];
        running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var[c];
      }
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mean[c] = running_mean[c];
      inv[c] = 1.0 / std::sqrt(running_var[c] + eps);
    }
  }

  const Tensor& tg = val(gamma);
  const Tensor& tbeta = val(beta);
  Tensor out(tx.shape());
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t c = 0; c < ch; ++c) {
      const double* row = tx.data() + (bi * ch + c) * frames;
      double* orow = out.data() + (bi * ch + c) * frames;
      const double a = tg[c] * inv[c];
      const double sh = tbeta[c] - a * mean[c];
      for (std::size_t t = 0; t < frames; ++t) orow[t] = a * row[t] + sh;
    }
  }

  bool ng = requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
  int ix = x.id, ig = gamma.id, ibt = beta.id,
      self = static_cast<int>(nodes_.size());
  return emit(std::move(out), ng,
              [=, mean = std::move(mean), inv = std::move(inv)](Graph& g) {
    const Tensor& gr = g.grad_buf(self);
    const Tensor& tx = g.nodes_[ix].value;
    const Tensor& tg = g.nodes_[ig].value;
    const bool need_x = g.nodes_[ix].needs_grad;
    const bool need_g = g.nodes_[ig].needs_grad;
    const bool need_b = g.nodes_[ibt].needs_grad;
    Tensor* gx = need_x ? &g.grad_buf(ix) : nullptr;
    Tensor* gg = need_g ? &g.grad_buf(ig) : nullptr;
    Tensor* gb = need_b ? &g.grad_buf(ibt) : nullptr;
    for (std::size_t c = 0; c < ch; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const double* xrow = tx.data() + (bi * ch + c) * frames;
        const double* grow = gr.data() + (bi * ch + c) * frames;
        for (std::size_t t = 0; t < frames; ++t) {
          const double xhat = (xrow[t] - mean[c]) * inv[c];
          sum_dy += grow[t];
          sum_dy_xhat += grow[t] * xhat;
        }
      }
      if (need_g) (*gg)[c] += sum_dy_xhat;
      if (need_b) (*gb)[c] += sum_dy;
      if (need_x) {
        const double gc = tg[c];
        if (use_batch_stats) {
          const double mm = static_cast<double>(m);
          for (std::size_t bi = 0; bi < batch; ++bi) {
            const double* xrow = tx.data() + (bi * ch + c) * frames;
            const double* grow = gr.data() + (bi * ch + c) * frames;
            double* gxrow = gx->data() + (bi * ch + c) * frames;
            for (std::size_t t = 0; t < frames; ++t) {
              const double xhat = (xrow[t] - mean[c]) * inv[c];
              gxrow[t] += gc * inv[c] *
                          (grow[t] - sum_dy / mm - xhat * sum_dy_xhat / mm);
            }
          }
        } else {
          for (std::size_t bi = 0; bi < batch; ++bi) {
            const double* grow = gr.data() + (bi * ch + c) * frames;
            double* gxrow = gx->data() + (bi * ch + c) * frames;
            for (std::size_t t = 0; t < frames; ++t) {
              gxrow[t] += gc * inv[c] * grow[t];
            }
          }
        }
      }
    }
  });
}

Graph::Var Graph::linear(Var x, Var w, Var b) {
  const Tensor& tx = val(x);
  const Tensor& tw = val(w);
  const Tensor& tb = val(b);
  check_shape(tx.rank() == 2 && tw.rank() == 2 && tb.rank() == 1,
              "linear rank");
  const std::size_t batch = tx.size(0), fin = tx.size(1), fout = tw.size(0);
  check_shape(tw.size(1) == fin && tb.size(0) == fout, "linear dims");
  Tensor out({batch, fout});
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t o = 0; o < fout; ++o) {
      double s = tb[o];
      const double* xrow = tx.data() + i * fin;
      const double* wrow = tw.data() + o * fin;
      for (std::size_t f = 0; f < fin; ++f) s += xrow[f] * wrow[f];
      out.at2(i, o) = s;
    }
  }
  bool ng = requires_grad(x) || requires_grad(w) || requires_grad(b);
  int ix = x.id, iw = w.id, ib = b.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), ng, [=](Graph& g) {
    const Tensor& gr = g.grad_buf(self);
    const Tensor& tx = g.nodes_[ix].value;
    const Tensor& tw = g.nodes_[iw].value;
    const bool need_x = g.nodes_[ix].needs_grad;
    const bool need_w = g.nodes_[iw].needs_grad;
    const bool need_b = g.nodes_[ib].needs_grad;
    if (need_b) {
      Tensor& gb = g.grad_buf(ib);
      for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t o = 0; o < fout; ++o) gb[o] += gr.at2(i, o);
      }
    }
    if (need_w) {
      Tensor& gw = g.grad_buf(iw);
      for (std::size_t i = 0; i < batch; ++i) {
        const double* xrow = tx.data() + i * fin;
        for (std::size_t o = 0; o < fout; ++o) {
          const double gio = gr.at2(i, o);
          double* gwrow = gw.data() + o * fin;
          for (std::size_t f = 0; f < fin; ++f) gwrow[f] += gio * xrow[f];
        }
      }
    }
    if (need_x) {
      Tensor& gx = g.grad_buf(ix);
      for (std::size_t i = 0; i < batch; ++i) {
        double* gxrow = gx.data() + i * fin;
        for (std::size_t o = 0; o < fout; ++o) {
          const double gio = gr.at2(i, o);
          const double* wrow = tw.data() + o * fin;
          for (std::size_t f = 0; f < fin; ++f) gxrow[f] += gio * wrow[f];
        }
      }
    }
  });
}

Graph::Var Graph::slice_channels(Var x, std::size_t begin, std::size_t end) {
  const Tensor& tx = val(x);
  check_shape(tx.rank() == 3, "slice_channels rank");
  check_shape(begin < end && end <= tx.size(1), "slice_channels range");
  const std::size_t batch = tx.size(0), ch = tx.size(1), frames = tx.size(2);
  const std::size_t width = end - begin;
  Tensor out({batch, width, frames});
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t c = 0; c < width; ++c) {
      const double* src = tx.data() + (bi * ch + begin + c) * frames;
      double* dst = out.data() + (bi * width + c) * frames;
      std::copy(src, src + frames, dst);
    }
  }
  int ix = x.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), requires_grad(x), [=](Graph& g) {
    if (!g.nodes_[ix].needs_grad) return;
    const Tensor& gr = g.grad_buf(self);
    Tensor& gx = g.grad_buf(ix);
    for (std::size_t bi = 0; bi < batch; ++bi) {
      for (std::size_t c = 0; c < width; ++c) {
        const double* src = gr.data() + (bi * width + c) * frames;
        double* dst = gx.data() + (bi * ch + begin + c) * frames;
        for (std::size_t t = 0; t < frames; ++t) dst[t] += src[t];
      }
    }
  });
}

Graph::Var Graph::concat_channels(const std::vector<Var>& xs) {
  check_shape(!xs.empty(), "concat_channels empty");
  const Tensor& first = val(xs[0]);
  check_shape(first.rank() == 3, "concat_channels rank");
  const std::size_t batch = first.size(0), frames = first.size(2);
  std::size_t total = 0;
  bool ng = false;
  for (Var v : xs) {
    const Tensor& t = val(v);
    check_shape(t.rank() == 3 && t.size(0) == batch && t.size(2) == frames,
                "concat_channels shape");
    total += t.size(1);
    ng = ng || requires_grad(v);
  }
  Tensor out({batch, total, frames});
  std::size_t base = 0;
  for (Var v : xs) {
    const Tensor& t = val(v);
    const std::size_t ch = t.size(1);
    for (std::size_t bi = 0; bi < batch; ++bi) {
      for (std::size_t c = 0; c < ch; ++c) {
        const double* src = t.data() + (bi * ch + c) * frames;
        double* dst = out.data() + (bi * total + base + c) * frames;
        std::copy(src, src + frames, dst);
      }
    }
    base += ch;
  }
  std::vector<int> ids;
  std::vector<std::size_t> widths;
  for (Var v : xs) {
    ids.push_back(v.id);
    widths.push_back(val(v).size(1));
  }
  int self = static_cast<int>(nodes_.size());
  return emit(std::move(out), ng, [=](Graph& g) {
    const Tensor& gr = g.grad_buf(self);
    std::size_t base = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      const std::size_t ch = widths[p];
      if (g.nodes_[ids[p]].needs_grad) {
        Tensor& gx = g.grad_buf(ids[p]);
        for (std::size_t bi = 0; bi < batch; ++bi) {
          for (std::size_t c = 0; c < ch; ++c) {
            const double* src = gr.data() + (bi * total + base + c) * frames;
            double* dst = gx.data() + (bi * ch + c) * frames;
            for (std::size_t t = 0; t < frames; ++t) dst[t] += src[t];
          }
        }
      }
      base += ch;
    }
  });
}

Graph::Var Graph::concat_features(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  check_shape(ta.rank() == 2 && tb.rank() == 2 && ta.size(0) == tb.size(0),
              "concat_features shape");
  const std::size_t batch = ta.size(0), fa = ta.size(1), fb = tb.size(1);
  Tensor out({batch, fa + fb});
  for (std::size_t i = 0; i < batch; ++i) {
    std::copy(ta.data() + i * fa, ta.data() + (i + 1) * fa,
              out.data() + i * (fa + fb));
    std::copy(tb.data() + i * fb, tb.data() + (i + 1) * fb,
              out.data() + i * (fa + fb) + fa);
  }
  bool ng = requires_grad(a) || requires_grad(b);
  int ia = a.id, ib = b.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), ng, [=](Graph& g) {
    const Tensor& gr = g.grad_buf(self);
    if (g.nodes_[ia].needs_grad) {
      Tensor& ga = g.grad_buf(ia);
      for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t f = 0; f < fa; ++f) {
          ga.at2(i, f) += gr.at2(i, f);
        }
      }
    }
    if (g.nodes_[ib].needs_grad) {
      Tensor& gb = g.grad_buf(ib);
      for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t f = 0; f < fb; ++f) {
          gb.at2(i, f) += gr.at2(i, fa + f);
        }
      }
    }
  });
}

Graph::Var Graph::gap_frames(Var x) {
  const Tensor& tx = val(x);
  check_shape(tx.rank() == 3, "gap_frames rank");
  const std::size_t batch = tx.size(0), ch = tx.size(1), frames = tx.size(2);
  Tensor out({batch, ch});
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t c = 0; c < ch; ++c) {
      const double* row = tx.data() + (bi * ch + c) * frames;
      double s = 0.0;
      for (std::size_t t = 0; t < frames; ++t) s += row[t];
      out.at2(bi, c) = s / static_cast<double>(frames);
    }
  }
  int ix = x.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), requires_grad(x), [=](Graph& g) {
    if (!g.nodes_[ix].needs_grad) return;
    const Tensor& gr = g.grad_buf(self);
    Tensor& gx = g.grad_buf(ix);
    const double invt = 1.0 / static_cast<double>(frames);
    for (std::size_t bi = 0; bi < batch; ++bi) {
      for (std::size_t c = 0; c < ch; ++c) {
        const double gv = gr.at2(bi, c) * invt;
        double* row = gx.data() + (bi * ch + c) * frames;
        for (std::size_t t = 0; t < frames; ++t) row[t] += gv;
      }
    }
  });
}

Graph::Var Graph::softmax_rows(Var x) {
  const Tensor& tx = val(x);
  check_shape(tx.rank() == 2, "softmax_rows rank");
  const std::size_t batch = tx.size(0), n = tx.size(1);
  Tensor out(tx.shape());
  for (std::size_t i = 0; i < batch; ++i) {
    const double* row = tx.data() + i * n;
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < n; ++j) {
      out.at2(i, j) = std::exp(row[j] - mx) / z;
    }
  }
  int ix = x.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), requires_grad(x), [=](Graph& g) {
    if (!g.nodes_[ix].needs_grad) return;
    const Tensor& gr = g.grad_buf(self);
    const Tensor& y = g.nodes_[self].value;
    Tensor& gx = g.grad_buf(ix);
    for (std::size_t i = 0; i < batch; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += gr.at2(i, j) * y.at2(i, j);
      for (std::size_t j = 0; j < n; ++j) {
        gx.at2(i, j) += y.at2(i, j) * (gr.at2(i, j) - dot);
      }
    }
  });
}

Graph::Var Graph::bchan_scale(Var x, Var gch) {
  const Tensor& tx = val(x);
  const Tensor& tg = val(gch);
  check_shape(tx.rank() == 3 && tg.rank() == 2, "bchan_scale rank");
  check_shape(tx.size(0) == tg.size(0) && tx.size(1) == tg.size(1),
              "bchan_scale shape");
  const std::size_t batch = tx.size(0), ch = tx.size(1), frames = tx.size(2);
  Tensor out(tx.shape());
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t c = 0; c < ch; ++c) {
      const double gv = tg.at2(bi, c);
      const double* row = tx.data() + (bi * ch + c) * frames;
      double* orow = out.data() + (bi * ch + c) * frames;
      for (std::size_t t = 0; t < frames; ++t) orow[t] = gv * row[t];
    }
  }
  bool ng = requires_grad(x) || requires_grad(gch);
  int ix = x.id, igc = gch.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), ng, [=](Graph& g) {
    const Tensor& gr = g.grad_buf(self);
    const Tensor& tx = g.nodes_[ix].value;
    const Tensor& tg = g.nodes_[igc].value;
    if (g.nodes_[ix].needs_grad) {
      Tensor& gx = g.grad_buf(ix);
      for (std::size_t bi = 0; bi < batch; ++bi) {
        for (std::size_t c = 0; c < ch; ++c) {
          const double gv = tg.at2(bi, c);
          const double* grow = gr.data() + (bi * ch + c) * frames;
          double* gxrow = gx.data() + (bi * ch + c) * frames;
          for (std::size_t t = 0; t < frames; ++t) gxrow[t] += gv * grow[t];
        }
      }
    }
    if (g.nodes_[igc].needs_grad) {
      Tensor& gg = g.grad_buf(igc);
      for (std::size_t bi = 0; bi < batch; ++bi) {
        for (std::size_t c = 0; c < ch; ++c) {
          const double* grow = gr.data() + (bi * ch + c) * frames;
          const double* xrow = tx.data() + (bi * ch + c) * frames;
          double s = 0.0;
          for (std::size_t t = 0; t < frames; ++t) s += grow[t] * xrow[t];
          gg.at2(bi, c) += s;
        }
      }
    }
  });
}

Graph::Var Graph::weighted_pool(Var h, Var alpha) {
  const Tensor& th = val(h);
  const Tensor& ta = val(alpha);
  check_shape(th.rank() == 3 && ta.rank() == 2, "weighted_pool rank");
  check_shape(th.size(0) == ta.size(0) && th.size(2) == ta.size(1),
              "weighted_pool shape");
  const std::size_t batch = th.size(0), ch = th.size(1), frames = th.size(2);
  Tensor out({batch, ch});
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t c = 0; c < ch; ++c) {
      const double* hrow = th.data() + (bi * ch + c) * frames;
      const double* arow = ta.data() + bi * frames;
      double s = 0.0;
      for (std::size_t t = 0; t < frames; ++t) s += arow[t] * hrow[t];
      out.at2(bi, c) = s;
    }
  }
  bool ng = requires_grad(h) || requires_grad(alpha);
  int ih = h.id, ia = alpha.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), ng, [=](Graph& g) {
    const Tensor& gr = g.grad_buf(self);
    const Tensor& th = g.nodes_[ih].value;
    const Tensor& ta = g.nodes_[ia].value;
    if (g.nodes_[ih].needs_grad) {
      Tensor& gh = g.grad_buf(ih);
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const double* arow = ta.data() + bi * frames;
        for (std::size_t c = 0; c < ch; ++c) {
          const double gv = gr.at2(bi, c);
          double* ghrow = gh.data() + (bi * ch + c) * frames;
          for (std::size_t t = 0; t < frames; ++t) ghrow[t] += gv * arow[t];
        }
      }
    }
    if (g.nodes_[ia].needs_grad) {
      Tensor& ga = g.grad_buf(ia);
      for (std::size_t bi = 0; bi < batch; ++bi) {
        double* garow = ga.data() + bi * frames;
        for (std::size_t c = 0; c < ch; ++c) {
          const double gv = gr.at2(bi, c);
          const double* hrow = th.data() + (bi * ch + c) * frames;
          for (std::size_t t = 0; t < frames; ++t) garow[t] += gv * hrow[t];
        }
      }
    }
  });
}

Graph::Var Graph::row_l2_normalize(Var x) {
  const Tensor& tx = val(x);
  check_shape(tx.rank() == 2, "row_l2_normalize rank");
  const std::size_t batch = tx.size(0), n = tx.size(1);
  std::vector<double> norms(batch);
  Tensor out(tx.shape());
  for (std::size_t i = 0; i < batch; ++i) {
    const double* row = tx.data() + i * n;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += row[j] * row[j];
    const double norm = std::sqrt(s);
    if (!(norm > 1e-12)) {
      throw NumericError("row_l2_normalize: degenerate zero-norm row");
    }
    norms[i] = norm;
    for (std::size_t j = 0; j < n; ++j) out.at2(i, j) = row[j] / norm;
  }
  int ix = x.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), requires_grad(x),
              [=, norms = std::move(norms)](Graph& g) {
    if (!g.nodes_[ix].needs_grad) return;
    const Tensor& gr = g.grad_buf(self);
    const Tensor& y = g.nodes_[self].value;
    Tensor& gx = g.grad_buf(ix);
    for (std::size_t i = 0; i < batch; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += gr.at2(i, j) * y.at2(i, j);
      for (std::size_t j = 0; j < n; ++j) {
        gx.at2(i, j) += (gr.at2(i, j) - dot * y.at2(i, j)) / norms[i];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Spectral ops
// ---------------------------------------------------------------------------

Graph::Var Graph::rfft_frames(Var x) {
  const Tensor& tx = val(x);
  check_shape(tx.rank() == 3, "rfft_frames rank");
  const std::size_t batch = tx.size(0), ch = tx.size(1), frames = tx.size(2);
  if (frames < 2) throw InvalidInputError("rfft_frames: need T >= 2");
  if (!tx.all_finite()) throw NumericError("rfft_frames: non-finite input");
  const std::size_t bins = fft::rfft_bins(frames);
  Tensor out({batch, ch, bins, 2});
  std::vector<fft::cplx> spec(bins);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t c = 0; c < ch; ++c) {
      fft::rfft(tx.data() + (bi * ch + c) * frames, frames, spec.data());
      double* orow = out.data() + (bi * ch + c) * bins * 2;
      for (std::size_t k = 0; k < bins; ++k) {
        orow[2 * k] = spec[k].real();
        orow[2 * k + 1] = spec[k].imag();
      }
    }
  }
  int ix = x.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), requires_grad(x), [=](Graph& g) {
    if (!g.nodes_[ix].needs_grad) return;
    const Tensor& gr = g.grad_buf(self);
    Tensor& gx = g.grad_buf(ix);
    // Adjoint of the forward transform: halve interior bins, drop the
    // (structurally zero-derivative) DC/Nyquist imaginary parts, run the
    // unnormalized Hermitian inverse.
    std::vector<fft::cplx> spec(bins);
    std::vector<double> tmp(frames);
    const bool even = frames % 2 == 0;
    for (std::size_t bi = 0; bi < batch; ++bi) {
      for (std::size_t c = 0; c < ch; ++c) {
        const double* grow = gr.data() + (bi * ch + c) * bins * 2;
        for (std::size_t k = 0; k < bins; ++k) {
          const bool edge = (k == 0) || (even && k == bins - 1);
          const double w = edge ? 1.0 : 0.5;
          spec[k] = fft::cplx(w * grow[2 * k], edge ? 0.0 : w * grow[2 * k + 1]);
        }
        fft::irfft(spec.data(), frames, tmp.data());
        double* gxrow = gx.data() + (bi * ch + c) * frames;
        for (std::size_t t = 0; t < frames; ++t) {
          gxrow[t] += static_cast<double>(frames) * tmp[t];
        }
      }
    }
  });
}

Graph::Var Graph::irfft_frames(Var s, std::size_t t_out) {
  const Tensor& ts = val(s);
  check_shape(ts.rank() == 4 && ts.size(3) == 2, "irfft_frames rank");
  const std::size_t batch = ts.size(0), ch = ts.size(1), bins = ts.size(2);
  if (fft::rfft_bins(t_out) != bins) {
    throw ShapeError("irfft_frames: bin count inconsistent with origin length");
  }
  Tensor out({batch, ch, t_out});
  std::vector<fft::cplx> spec(bins);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t c = 0; c < ch; ++c) {
      const double* srow = ts.data() + (bi * ch + c) * bins * 2;
      for (std::size_t k = 0; k < bins; ++k) {
        spec[k] = fft::cplx(srow[2 * k], srow[2 * k + 1]);
      }
      fft::irfft(spec.data(), t_out, out.data() + (bi * ch + c) * t_out);
    }
  }
  int is = s.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), requires_grad(s), [=](Graph& g) {
    if (!g.nodes_[is].needs_grad) return;
    const Tensor& gr = g.grad_buf(self);
    Tensor& gs = g.grad_buf(is);
    std::vector<fft::cplx> spec(bins);
    const bool even = t_out % 2 == 0;
    const double invt = 1.0 / static_cast<double>(t_out);
    for (std::size_t bi = 0; bi < batch; ++bi) {
      for (std::size_t c = 0; c < ch; ++c) {
        fft::rfft(gr.data() + (bi * ch + c) * t_out, t_out, spec.data());
        double* gsrow = gs.data() + (bi * ch + c) * bins * 2;
        for (std::size_t k = 0; k < bins; ++k) {
          const bool edge = (k == 0) || (even && k == bins - 1);
          const double w = (edge ? 1.0 : 2.0) * invt;
          gsrow[2 * k] += w * spec[k].real();
          if (!edge) gsrow[2 * k + 1] += w * spec[k].imag();
        }
      }
    }
  });
}

Graph::Var Graph::cmul(Var spec, Var filt) {
  const Tensor& ts = val(spec);
  const Tensor& tf = val(filt);
  check_shape(ts.rank() == 4 && ts.size(3) == 2, "cmul spectrum rank");
  const bool shared = tf.rank() == 3;
  check_shape(shared || (tf.rank() == 4 && tf.size(0) == ts.size(0)),
              "cmul filter rank");
  const std::size_t batch = ts.size(0), ch = ts.size(1), bins = ts.size(2);
  const std::size_t fch = shared ? tf.size(0) : tf.size(1);
  const std::size_t fbins = shared ? tf.size(1) : tf.size(2);
  if (fch != ch) throw ShapeError("cmul: filter channel mismatch");
  if (fbins != bins) throw ShapeError("cmul: filter bin mismatch");
  Tensor out(ts.shape());
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t c = 0; c < ch; ++c) {
      const double* srow = ts.data() + (bi * ch + c) * bins * 2;
      const double* frow = shared ? tf.data() + c * bins * 2
                                  : tf.data() + (bi * ch + c) * bins * 2;
      double* orow = out.data() + (bi * ch + c) * bins * 2;
      for (std::size_t k = 0; k < bins; ++k) {
        const double ar = srow[2 * k], ai = srow[2 * k + 1];
        const double br = frow[2 * k], bi2 = frow[2 * k + 1];
        orow[2 * k] = ar * br - ai * bi2;
        orow[2 * k + 1] = ar * bi2 + ai * br;
      }
    }
  }
  bool ng = requires_grad(spec) || requires_grad(filt);
  int is = spec.id, ifl = filt.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), ng, [=](Graph& g) {
    const Tensor& gr = g.grad_buf(self);
    const Tensor& ts = g.nodes_[is].value;
    const Tensor& tf = g.nodes_[ifl].value;
    const bool need_s = g.nodes_[is].needs_grad;
    const bool need_f = g.nodes_[ifl].needs_grad;
    Tensor* gs = need_s ? &g.grad_buf(is) : nullptr;
    Tensor* gf = need_f ? &g.grad_buf(ifl) : nullptr;
    for (std::size_t bi = 0; bi < batch; ++bi) {
      for (std::size_t c = 0; c < ch; ++c) {
        const double* srow = ts.data() + (bi * ch + c) * bins * 2;
        const double* frow = shared ? tf.data() + c * bins * 2
                                    : tf.data() + (bi * ch + c) * bins * 2;
        const double* grow = gr.data() + (bi * ch + c) * bins * 2;
        double* gsrow = need_s ? gs->data() + (bi * ch + c) * bins * 2
                               : nullptr;
        double* gfrow = nullptr;
        if (need_f) {
          gfrow = shared ? gf->data() + c * bins * 2
                         : gf->data() + (bi * ch + c) * bins * 2;
        }
        for (std::size_t k = 0; k < bins; ++k) {
          const double gre = grow[2 * k], gim = grow[2 * k + 1];
          const double br = frow[2 * k], bi2 = frow[2 * k + 1];
          const double ar = srow[2 * k], ai = srow[2 * k + 1];
          if (need_s) {
            gsrow[2 * k] += gre * br + gim * bi2;
            gsrow[2 * k + 1] += -gre * bi2 + gim * br;
          }
          if (need_f) {
            gfrow[2 * k] += gre * ar + gim * ai;
            gfrow[2 * k + 1] += -gre * ai + gim * ar;
          }
        }
      }
    }
  });
}

Graph::Var Graph::mix_filters(Var bank, Var scores) {
  const Tensor& tb = val(bank);
  const Tensor& tw = val(scores);
  check_shape(tb.rank() == 4 && tb.size(3) == 2, "mix_filters bank rank");
  check_shape(tw.rank() == 2, "mix_filters scores rank");
  const std::size_t experts = tb.size(0), ch = tb.size(1), bins = tb.size(2);
  const std::size_t batch = tw.size(0);
  if (tw.size(1) != experts) {
    throw ShapeError("mix_filters: expert-count mismatch");
  }
  const std::size_t stride = ch * bins * 2;
  Tensor out({batch, ch, bins, 2});
  for (std::size_t bi = 0; bi < batch; ++bi) {
    double* orow = out.data() + bi * stride;
    for (std::size_t k = 0; k < experts; ++k) {
      const double wk = tw.at2(bi, k);
      const double* brow = tb.data() + k * stride;
      for (std::size_t i = 0; i < stride; ++i) orow[i] += wk * brow[i];
    }
  }
  bool ng = requires_grad(bank) || requires_grad(scores);
  int ibk = bank.id, iw = scores.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), ng, [=](Graph& g) {
    const Tensor& gr = g.grad_buf(self);
    const Tensor& tb = g.nodes_[ibk].value;
    const Tensor& tw = g.nodes_[iw].value;
    if (g.nodes_[ibk].needs_grad) {
      Tensor& gb = g.grad_buf(ibk);
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const double* grow = gr.data() + bi * stride;
        for (std::size_t k = 0; k < experts; ++k) {
          const double wk = tw.at2(bi, k);
          double* gbrow = gb.data() + k * stride;
          for (std::size_t i = 0; i < stride; ++i) gbrow[i] += wk * grow[i];
        }
      }
    }
    if (g.nodes_[iw].needs_grad) {
      Tensor& gw = g.grad_buf(iw);
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const double* grow = gr.data() + bi * stride;
        for (std::size_t k = 0; k < experts; ++k) {
          const double* brow = tb.data() + k * stride;
          double s = 0.0;
          for (std::size_t i = 0; i < stride; ++i) s += grow[i] * brow[i];
          gw.at2(bi, k) += s;
        }
      }
    }
  });
}

Graph::Var Graph::interp_bins(Var f, std::size_t new_bins) {
  const Tensor& tf = val(f);
  check_shape(tf.rank() >= 2 && tf.size(tf.rank() - 1) == 2,
              "interp_bins trailing complex dim");
  const std::size_t bins = tf.size(tf.rank() - 2);
  check_shape(new_bins >= 1, "interp_bins target");
  const std::size_t rows = tf.numel() / (bins * 2);

  std::vector<std::size_t> out_shape = tf.shape();
  out_shape[out_shape.size() - 2] = new_bins;

  // Sample positions are uniform over normalized frequency [0, 0.5] on both
  // grids; identical grids reproduce the input exactly.
  std::vector<std::size_t> left(new_bins);
  std::vector<double> frac(new_bins);
  for (std::size_t j = 0; j < new_bins; ++j) {
    double u;
    if (new_bins == 1 || bins == 1) {
      u = 0.0;
    } else {
      u = static_cast<double>(j) * static_cast<double>(bins - 1) /
          static_cast<double>(new_bins - 1);
    }
    std::size_t i0 = static_cast<std::size_t>(u);
    if (i0 >= bins - 1) {
      i0 = bins - 1;
      left[j] = i0;
      frac[j] = 0.0;
    } else {
      left[j] = i0;
      frac[j] = u - static_cast<double>(i0);
    }
  }

  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = tf.data() + r * bins * 2;
    double* dst = out.data() + r * new_bins * 2;
    for (std::size_t j = 0; j < new_bins; ++j) {
      const std::size_t i0 = left[j];
      const double w = frac[j];
      const std::size_t i1 = (w > 0.0) ? i0 + 1 : i0;
      dst[2 * j] = (1.0 - w) * src[2 * i0] + w * src[2 * i1];
      dst[2 * j + 1] = (1.0 - w) * src[2 * i0 + 1] + w * src[2 * i1 + 1];
    }
  }
  int ifl = f.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), requires_grad(f),
              [=, left = std::move(left), frac = std::move(frac)](Graph& g) {
    if (!g.nodes_[ifl].needs_grad) return;
    const Tensor& gr = g.grad_buf(self);
    Tensor& gf = g.grad_buf(ifl);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* grow = gr.data() + r * new_bins * 2;
      double* gfrow = gf.data() + r * bins * 2;
      for (std::size_t j = 0; j < new_bins; ++j) {
        const std::size_t i0 = left[j];
        const double w = frac[j];
        const std::size_t i1 = (w > 0.0) ? i0 + 1 : i0;
        gfrow[2 * i0] += (1.0 - w) * grow[2 * j];
        gfrow[2 * i0 + 1] += (1.0 - w) * grow[2 * j + 1];
        if (w > 0.0) {
          gfrow[2 * i1] += w * grow[2 * j];
          gfrow[2 * i1 + 1] += w * grow[2 * j + 1];
        }
      }
    }
  });
}

Graph::Var Graph::sparse_apply(Var spec, Var fd, const Tensor& mask,
                               const Tensor& lambda) {
  const Tensor& ts = val(spec);
  const Tensor& tf = val(fd);
  check_shape(ts.rank() == 4 && tf.rank() == 4, "sparse_apply rank");
  check_shape(ts.same_shape(tf), "sparse_apply spectrum/filter shape");
  const std::size_t batch = ts.size(0), ch = ts.size(1), bins = ts.size(2);
  check_shape(mask.rank() == 2 && mask.size(0) == batch && mask.size(1) == ch,
              "sparse_apply mask shape");
  check_shape(lambda.numel() == batch, "sparse_apply lambda shape");

  Tensor out(ts.shape());
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const double lam = lambda[bi];
    for (std::size_t c = 0; c < ch; ++c) {
      const bool active = mask.at2(bi, c) != 0.0;
      const double* srow = ts.data() + (bi * ch + c) * bins * 2;
      const double* frow = tf.data() + (bi * ch + c) * bins * 2;
      double* orow = out.data() + (bi * ch + c) * bins * 2;
      if (active) {
        for (std::size_t k = 0; k < bins; ++k) {
          const double ar = srow[2 * k], ai = srow[2 * k + 1];
          const double br = frow[2 * k], bim = frow[2 * k + 1];
          orow[2 * k] = ar * br - ai * bim;
          orow[2 * k + 1] = ar * bim + ai * br;
        }
      } else {
        for (std::size_t k = 0; k < 2 * bins; ++k) orow[k] = lam * srow[k];
      }
    }
  }

  bool ng = requires_grad(spec) || requires_grad(fd);
  int is = spec.id, ifd = fd.id, self = static_cast<int>(nodes_.size());
  Tensor mask_copy = mask;
  Tensor lambda_copy = lambda;
  return emit(std::move(out), ng,
              [=, mask = std::move(mask_copy),
               lambda = std::move(lambda_copy)](Graph& g) {
    const Tensor& gr = g.grad_buf(self);
    const Tensor& ts = g.nodes_[is].value;
    const Tensor& tf = g.nodes_[ifd].value;
    const bool need_s = g.nodes_[is].needs_grad;
    const bool need_f = g.nodes_[ifd].needs_grad;
    Tensor* gs = need_s ? &g.grad_buf(is) : nullptr;
    Tensor* gf = need_f ? &g.grad_buf(ifd) : nullptr;
    for (std::size_t bi = 0; bi < batch; ++bi) {
      const double lam = lambda[bi];
      for (std::size_t c = 0; c < ch; ++c) {
        const bool active = mask.at2(bi, c) != 0.0;
        const double* srow = ts.data() + (bi * ch + c) * bins * 2;
        const double* frow = tf.data() + (bi * ch + c) * bins * 2;
        const double* grow = gr.data() + (bi * ch + c) * bins * 2;
        if (active) {
          for (std::size_t k = 0; k < bins; ++k) {
            const double gre = grow[2 * k], gim = grow[2 * k + 1];
            const double ar = srow[2 * k], ai = srow[2 * k + 1];
            const double br = frow[2 * k], bim = frow[2 * k + 1];
            if (need_s) {
              (*gs)[(bi * ch + c) * bins * 2 + 2 * k] += gre * br + gim * bim;
              (*gs)[(bi * ch + c) * bins * 2 + 2 * k + 1] +=
                  -gre * bim + gim * br;
            }
            if (need_f) {
              (*gf)[(bi * ch + c) * bins * 2 + 2 * k] += gre * ar + gim * ai;
              (*gf)[(bi * ch + c) * bins * 2 + 2 * k + 1] +=
                  -gre * ai + gim * ar;
            }
          }
        } else if (need_s) {
          // lambda is a constant of the step: no gradient through it, and
          // none into the deactivated filter rows.
          double* gsrow = gs->data() + (bi * ch + c) * bins * 2;
          for (std::size_t k = 0; k < 2 * bins; ++k) gsrow[k] += lam * grow[k];
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Loss ops
// ---------------------------------------------------------------------------

Graph::Var Graph::aam_margin(Var cos, const std::vector<std::size_t>& labels,
                             double margin, double scl) {
  const Tensor& tc = val(cos);
  check_shape(tc.rank() == 2, "aam_margin rank");
  const std::size_t batch = tc.size(0), classes = tc.size(1);
  check_shape(labels.size() == batch, "aam_margin labels length");
  constexpr double kClamp = 1e-7;
  Tensor out(tc.shape());
  std::vector<double> dtarget(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t y = labels[i];
    if (y >= classes) throw InvalidInputError("aam_margin: label out of range");
    for (std::size_t j = 0; j < classes; ++j) {
      out.at2(i, j) = scl * tc.at2(i, j);
    }
    const double c =
        std::clamp(tc.at2(i, y), -1.0 + kClamp, 1.0 - kClamp);
    const double theta = std::acos(c);
    if (theta + margin <= 3.14159265358979323846) {
      out.at2(i, y) = scl * std::cos(theta + margin);
      dtarget[i] = scl * std::sin(theta + margin) / std::sin(theta);
    } else {
      out.at2(i, y) = scl * -1.0;
      dtarget[i] = 0.0;
    }
  }
  int ic = cos.id, self = static_cast<int>(nodes_.size());
  std::vector<std::size_t> labels_copy = labels;
  return emit(std::move(out), requires_grad(cos),
              [=, labels = std::move(labels_copy),
               dtarget = std::move(dtarget)](Graph& g) {
    if (!g.nodes_[ic].needs_grad) return;
    const Tensor& gr = g.grad_buf(self);
    Tensor& gc = g.grad_buf(ic);
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t j = 0; j < classes; ++j) {
        const double factor = (j == labels[i]) ? dtarget[i] : scl;
        gc.at2(i, j) += factor * gr.at2(i, j);
      }
    }
  });
}

Graph::Var Graph::cross_entropy(Var logits,
                                const std::vector<std::size_t>& labels) {
  const Tensor& tz = val(logits);
  check_shape(tz.rank() == 2, "cross_entropy rank");
  const std::size_t batch = tz.size(0), classes = tz.size(1);
  check_shape(labels.size() == batch, "cross_entropy labels length");
  Tensor soft({batch, classes});
  double loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const double* row = tz.data() + i * classes;
    double mx = row[0];
    for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < classes; ++j) z += std::exp(row[j] - mx);
    const std::size_t y = labels[i];
    if (y >= classes) {
      throw InvalidInputError("cross_entropy: label out of range");
    }
    loss += mx + std::log(z) - row[y];
    for (std::size_t j = 0; j < classes; ++j) {
      soft.at2(i, j) = std::exp(row[j] - mx) / z;
    }
  }
  loss /= static_cast<double>(batch);
  if (!std::isfinite(loss)) throw NumericError("cross_entropy: non-finite loss");
  Tensor out({std::size_t{1}});
  out[0] = loss;
  int iz = logits.id, self = static_cast<int>(nodes_.size());
  std::vector<std::size_t> labels_copy = labels;
  return emit(std::move(out), requires_grad(logits),
              [=, labels = std::move(labels_copy),
               soft = std::move(soft)](Graph& g) {
    if (!g.nodes_[iz].needs_grad) return;
    const double up = g.grad_buf(self)[0] / static_cast<double>(batch);
    Tensor& gz = g.grad_buf(iz);
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t j = 0; j < classes; ++j) {
        const double onehot = (j == labels[i]) ? 1.0 : 0.0;
        gz.at2(i, j) += up * (soft.at2(i, j) - onehot);
      }
    }
  });
}

Graph::Var Graph::sum_all(Var x) {
  const Tensor& tx = val(x);
  Tensor out({std::size_t{1}});
  double s = 0.0;
  for (std::size_t i = 0; i < tx.numel(); ++i) s += tx[i];
  out[0] = s;
  int ix = x.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), requires_grad(x), [=](Graph& g) {
    if (!g.nodes_[ix].needs_grad) return;
    const double up = g.grad_buf(self)[0];
    Tensor& gx = g.grad_buf(ix);
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += up;
  });
}

Graph::Var Graph::mean_all(Var x) {
  const double inv = 1.0 / static_cast<double>(val(x).numel());
  return scale(sum_all(x), inv);
}

Graph::Var Graph::matmul_nt(Var a, Var w) {
  const Tensor& ta = val(a);
  const Tensor& tw = val(w);
  check_shape(ta.rank() == 2 && tw.rank() == 2 && ta.size(1) == tw.size(1),
              "matmul_nt dims");
  const std::size_t batch = ta.size(0), fin = ta.size(1), rows = tw.size(0);
  Tensor out({batch, rows});
  for (std::size_t i = 0; i < batch; ++i) {
    const double* arow = ta.data() + i * fin;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* wrow = tw.data() + r * fin;
      double s = 0.0;
      for (std::size_t f = 0; f < fin; ++f) s += arow[f] * wrow[f];
      out.at2(i, r) = s;
    }
  }
  bool ng = requires_grad(a) || requires_grad(w);
  int ia = a.id, iw = w.id, self = static_cast<int>(nodes_.size());
  return emit(std::move(out), ng, [=](Graph& g) {
    const Tensor& gr = g.grad_buf(self);
    const Tensor& ta = g.nodes_[ia].value;
    const Tensor& tw = g.nodes_[iw].value;
    if (g.nodes_[ia].needs_grad) {
      Tensor& ga = g.grad_buf(ia);
      for (std::size_t i = 0; i < batch; ++i) {
        double* garow = ga.data() + i * fin;
        for (std::size_t r = 0; r < rows; ++r) {
          const double gv = gr.at2(i, r);
          const double* wrow = tw.data() + r * fin;
          for (std::size_t f = 0; f < fin; ++f) garow[f] += gv * wrow[f];
        }
      }
    }
    if (g.nodes_[iw].needs_grad) {
      Tensor& gw = g.grad_buf(iw);
      for (std::size_t i = 0; i < batch; ++i) {
        const double* arow = ta.data() + i * fin;
        for (std::size_t r = 0; r < rows; ++r) {
          const double gv = gr.at2(i, r);
          double* gwrow = gw.data() + r * fin;
          for (std::size_t f = 0; f < fin; ++f) gwrow[f] += gv * arow[f];
        }
      }
    }
  });
}

}  // namespace dstdnn
