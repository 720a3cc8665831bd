// SPDX-License-Identifier: Apache-2.0
#include "visnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "visnet/error.hpp"

namespace visnet {

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

namespace ops {
namespace {

Tape& tape_of(const Var& v) {
  if (!v.valid()) throw TapeError("use of an unbound Var");
  return *v.tape();
}

void require_same_shape(const Var& a, const Var& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

// Interpolation taps along one axis for the half-pixel-center convention.
struct AxisTaps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

AxisTaps make_taps(std::size_t src, std::size_t dst) {
  AxisTaps t;
  t.lo.resize(dst);
  t.hi.resize(dst);
  t.frac.resize(dst);
  const double ratio = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t i = 0; i < dst; ++i) {
    double s = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const auto l = static_cast<std::size_t>(std::floor(s));
    t.lo[i] = l;
    t.hi[i] = std::min(l + 1, src - 1);
    t.frac[i] = s - static_cast<double>(l);
  }
  return t;
}

Var resize_impl(Var x, std::size_t height, std::size_t width) {
  require_rank(x.value(), 4, "bilinear resize input");
  if (height == 0 || width == 0) throw DimensionError("bilinear resize target must be positive");
  const auto& s = x.shape();
  const std::size_t B = s[0], C = s[1], h = s[2], w = s[3];
  if (h == height && w == width) {
    Tensor out(s, std::vector<double>(x.value().values()));
    return tape_of(x).record(std::move(out), {x}, [](std::span<const double> g, std::span<std::vector<double>* const> in) {
      auto& gx = *in[0];
      for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k];
    });
  }
  auto ty = std::make_shared<AxisTaps>(make_taps(h, height));
  auto tx = std::make_shared<AxisTaps>(make_taps(w, width));
  Tensor out(Shape{B, C, height, width});
  const auto& xv = x.value().values();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const double* src = xv.data() + bc * h * w;
    double* dst = out.data().data() + bc * height * width;
    for (std::size_t i = 0; i < height; ++i) {
      const double fy = ty->frac[i];
      const double* r0 = src + ty->lo[i] * w;
      const double* r1 = src + ty->hi[i] * w;
      for (std::size_t j = 0; j < width; ++j) {
        const double fx = tx->frac[j];
        const double top = r0[tx->lo[j]] * (1.0 - fx) + r0[tx->hi[j]] * fx;
        const double bot = r1[tx->lo[j]] * (1.0 - fx) + r1[tx->hi[j]] * fx;
        dst[i * width + j] = top * (1.0 - fy) + bot * fy;
      }
    }
  }
  return tape_of(x).record(std::move(out), {x},
                           [ty, tx, B, C, h, w, height, width](std::span<const double> g,
                                                               std::span<std::vector<double>* const> in) {
                             auto& gx = *in[0];
                             for (std::size_t bc = 0; bc < B * C; ++bc) {
                               double* src = gx.data() + bc * h * w;
                               const double* go = g.data() + bc * height * width;
                               for (std::size_t i = 0; i < height; ++i) {
                                 const double fy = ty->frac[i];
                                 for (std::size_t j = 0; j < width; ++j) {
                                   const double fx = tx->frac[j];
                                   const double v = go[i * width + j];
                                   src[ty->lo[i] * w + tx->lo[j]] += v * (1.0 - fy) * (1.0 - fx);
                                   src[ty->lo[i] * w + tx->hi[j]] += v * (1.0 - fy) * fx;
                                   src[ty->hi[i] * w + tx->lo[j]] += v * fy * (1.0 - fx);
                                   src[ty->hi[i] * w + tx->hi[j]] += v * fy * fx;
                                 }
                               }
                             }
                           });
}

double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Var conv1x1(Var x, Var weight, std::optional<Var> bias) {
  require_rank(x.value(), 4, "conv1x1 input");
  require_rank(weight.value(), 2, "conv1x1 weight");
  const std::size_t B = x.dim(0), Cin = x.dim(1), S = x.dim(2) * x.dim(3);
  const std::size_t Cout = weight.dim(0);
  if (weight.dim(1) != Cin) {
    throw DimensionError("conv1x1: weight expects " + std::to_string(weight.dim(1)) + " input channels, input has " +
                         std::to_string(Cin));
  }
  if (bias) require_shape(bias->value(), Shape{Cout}, "conv1x1 bias");

  Tensor out(Shape{B, Cout, x.dim(2), x.dim(3)});
  const auto& xv = x.value().values();
  const auto& wv = weight.value().values();
  auto o = out.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t oc = 0; oc < Cout; ++oc) {
      double* dst = o.data() + (b * Cout + oc) * S;
      if (bias) std::fill(dst, dst + S, bias->value()[oc]);
      for (std::size_t c = 0; c < Cin; ++c) {
        const double k = wv[oc * Cin + c];
        const double* src = xv.data() + (b * Cin + c) * S;
        for (std::size_t s = 0; s < S; ++s) dst[s] += k * src[s];
      }
    }
  }

  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  const Tensor* xt = &x.value();
  const Tensor* wt = &weight.value();
  return tape_of(x).record(std::move(out), inputs,
                           [xt, wt, B, Cin, Cout, S](std::span<const double> g,
                                                     std::span<std::vector<double>* const> in) {
                             const auto& xv = xt->values();
                             const auto& wv = wt->values();
                             for (std::size_t b = 0; b < B; ++b) {
                               for (std::size_t oc = 0; oc < Cout; ++oc) {
                                 const double* go = g.data() + (b * Cout + oc) * S;
                                 for (std::size_t c = 0; c < Cin; ++c) {
                                   const double* src = xv.data() + (b * Cin + c) * S;
                                   if (in[0]) {
                                     const double k = wv[oc * Cin + c];
                                     double* gx = in[0]->data() + (b * Cin + c) * S;
                                     for (std::size_t s = 0; s < S; ++s) gx[s] += k * go[s];
                                   }
                                   if (in[1]) {
                                     double acc = 0.0;
                                     for (std::size_t s = 0; s < S; ++s) acc += go[s] * src[s];
                                     (*in[1])[oc * Cin + c] += acc;
                                   }
                                 }
                                 if (in.size() > 2 && in[2]) {
                                   double acc = 0.0;
                                   for (std::size_t s = 0; s < S; ++s) acc += go[s];
                                   (*in[2])[oc] += acc;
                                 }
                               }
                             }
                           });
}

Var batch_norm(Var x, Var gamma, Var beta, BatchNormStats& stats, Mode mode) {
  const auto& xs = x.shape();
  if (xs.size() != 2 && xs.size() != 4) {
    throw DimensionError("batch_norm: expected rank 2 or 4 input, got " + shape_to_string(xs));
  }
  if (!(stats.eps > 0.0)) throw ConfigError("batch_norm: eps must be positive");
  const std::size_t C = xs[1];
  const std::size_t N = xs[0];
  const std::size_t S = xs.size() == 4 ? xs[2] * xs[3] : 1;
  const std::size_t m = N * S;
  require_shape(gamma.value(), Shape{C}, "batch_norm gamma");
  require_shape(beta.value(), Shape{C}, "batch_norm beta");
  require_shape(stats.running_mean, Shape{C}, "batch_norm running mean");
  require_shape(stats.running_var, Shape{C}, "batch_norm running var");

  auto index = [C, S](std::size_t n, std::size_t c, std::size_t s) { return (n * C + c) * S + s; };

  const auto& xv = x.value().values();
  std::vector<double> mean(C), var(C);
  if (mode == Mode::kTrain) {
    if (m < 2) {
      throw DegenerateBatchError("batch_norm: train mode needs at least 2 values per channel, got " +
                                 std::to_string(m));
    }
    for (std::size_t c = 0; c < C; ++c) {
      double acc = 0.0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t s = 0; s < S; ++s) acc += xv[index(n, c, s)];
      mean[c] = acc / static_cast<double>(m);
      double sq = 0.0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t s = 0; s < S; ++s) {
          const double d = xv[index(n, c, s)] - mean[c];
          sq += d * d;
        }
      var[c] = sq / static_cast<double>(m);
      const double unbiased = sq / static_cast<double>(m - 1);
      stats.running_mean[c] = (1.0 - stats.momentum) * stats.running_mean[c] + stats.momentum * mean[c];
      stats.running_var[c] = (1.0 - stats.momentum) * stats.running_var[c] + stats.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = stats.running_mean[c];
      var[c] = stats.running_var[c];
    }
  }

  auto inv_std = std::make_shared<std::vector<double>>(C);
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  Tensor out(xs);
  const auto& gv = gamma.value().values();
  const auto& bv = beta.value().values();
  for (std::size_t c = 0; c < C; ++c) {
    (*inv_std)[c] = 1.0 / std::sqrt(var[c] + stats.eps);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t s = 0; s < S; ++s) {
        const auto k = index(n, c, s);
        (*xhat)[k] = (xv[k] - mean[c]) * (*inv_std)[c];
        out[k] = gv[c] * (*xhat)[k] + bv[c];
      }
  }

  const Tensor* gt = &gamma.value();
  const bool train = mode == Mode::kTrain;
  return tape_of(x).record(
      std::move(out), {x, gamma, beta},
      [inv_std, xhat, gt, train, N, C, S, m, index](std::span<const double> g,
                                                    std::span<std::vector<double>* const> in) {
        const auto& gv = gt->values();
        for (std::size_t c = 0; c < C; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t s = 0; s < S; ++s) {
              const auto k = index(n, c, s);
              sum_g += g[k];
              sum_gx += g[k] * (*xhat)[k];
            }
          if (in[1]) (*in[1])[c] += sum_gx;
          if (in[2]) (*in[2])[c] += sum_g;
          if (!in[0]) continue;
          auto& gx = *in[0];
          const double scale_c = gv[c] * (*inv_std)[c];
          if (train) {
            const double md = static_cast<double>(m);
            for (std::size_t n = 0; n < N; ++n)
              for (std::size_t s = 0; s < S; ++s) {
                const auto k = index(n, c, s);
                gx[k] += scale_c * (g[k] - sum_g / md - (*xhat)[k] * sum_gx / md);
              }
          } else {
            for (std::size_t n = 0; n < N; ++n)
              for (std::size_t s = 0; s < S; ++s) {
                const auto k = index(n, c, s);
                gx[k] += scale_c * g[k];
              }
          }
        }
      });
}

Var bilinear_upsample(Var x, std::size_t height, std::size_t width) {
  require_rank(x.value(), 4, "bilinear_upsample input");
  if (height < x.dim(2) || width < x.dim(3)) {
    throw DimensionError("bilinear_upsample: target " + std::to_string(height) + "x" + std::to_string(width) +
                         " is smaller than source " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                         " (downsampling unsupported)");
  }
  return resize_impl(x, height, width);
}

Var bilinear_resize(Var x, std::size_t height, std::size_t width) { return resize_impl(x, height, width); }

Var global_avg_pool(Var x) {
  require_rank(x.value(), 4, "global_avg_pool input");
  const std::size_t B = x.dim(0), C = x.dim(1), S = x.dim(2) * x.dim(3);
  Tensor out(Shape{B, C});
  const auto& xv = x.value().values();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    out[bc] = pairwise_sum(std::span<const double>(xv.data() + bc * S, S)) / static_cast<double>(S);
  }
  return tape_of(x).record(std::move(out), {x}, [B, C, S](std::span<const double> g,
                                                          std::span<std::vector<double>* const> in) {
    auto& gx = *in[0];
    for (std::size_t bc = 0; bc < B * C; ++bc) {
      const double v = g[bc] / static_cast<double>(S);
      for (std::size_t s = 0; s < S; ++s) gx[bc * S + s] += v;
    }
  });
}

Var dense(Var x, Var weight, std::optional<Var> bias) {
  require_rank(x.value(), 2, "dense input");
  require_rank(weight.value(), 2, "dense weight");
  const std::size_t N = x.dim(0), In = x.dim(1), Out = weight.dim(0);
  if (weight.dim(1) != In) {
    throw DimensionError("dense: weight expects " + std::to_string(weight.dim(1)) + " inputs, got " +
                         std::to_string(In));
  }
  if (bias) require_shape(bias->value(), Shape{Out}, "dense bias");
  Tensor out(Shape{N, Out});
  const auto& xv = x.value().values();
  const auto& wv = weight.value().values();
  for (std::size_t n = 0; n < N; ++n) {
    const double* xr = xv.data() + n * In;
    for (std::size_t o = 0; o < Out; ++o) {
      const double* wr = wv.data() + o * In;
      double acc = bias ? bias->value()[o] : 0.0;
      for (std::size_t k = 0; k < In; ++k) acc += xr[k] * wr[k];
      out[n * Out + o] = acc;
    }
  }
  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  const Tensor* xt = &x.value();
  const Tensor* wt = &weight.value();
  return tape_of(x).record(std::move(out), inputs,
                           [xt, wt, N, In, Out](std::span<const double> g, std::span<std::vector<double>* const> in) {
                             const auto& xv = xt->values();
                             const auto& wv = wt->values();
                             for (std::size_t n = 0; n < N; ++n) {
                               const double* xr = xv.data() + n * In;
                               for (std::size_t o = 0; o < Out; ++o) {
                                 const double go = g[n * Out + o];
                                 if (go == 0.0) continue;
                                 if (in[0]) {
                                   double* gx = in[0]->data() + n * In;
                                   const double* wr = wv.data() + o * In;
                                   for (std::size_t k = 0; k < In; ++k) gx[k] += go * wr[k];
                                 }
                                 if (in[1]) {
                                   double* gw = in[1]->data() + o * In;
                                   for (std::size_t k = 0; k < In; ++k) gw[k] += go * xr[k];
                                 }
                                 if (in.size() > 2 && in[2]) (*in[2])[o] += go;
                               }
                             }
                           });
}

Var relu(Var x) {
  Tensor out(x.shape());
  const auto& xv = x.value().values();
  for (std::size_t k = 0; k < xv.size(); ++k) out[k] = xv[k] > 0.0 ? xv[k] : 0.0;
  const Tensor* xt = &x.value();
  return tape_of(x).record(std::move(out), {x}, [xt](std::span<const double> g,
                                                     std::span<std::vector<double>* const> in) {
    const auto& xv = xt->values();
    auto& gx = *in[0];
    for (std::size_t k = 0; k < g.size(); ++k)
      if (xv[k] > 0.0) gx[k] += g[k];
  });
}

Var sigmoid(Var x) {
  Tensor out(x.shape());
  const auto& xv = x.value().values();
  for (std::size_t k = 0; k < xv.size(); ++k) out[k] = stable_sigmoid(xv[k]);
  auto y = std::make_shared<std::vector<double>>(out.values());
  return tape_of(x).record(std::move(out), {x}, [y](std::span<const double> g,
                                                    std::span<std::vector<double>* const> in) {
    auto& gx = *in[0];
    for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k] * (*y)[k] * (1.0 - (*y)[k]);
  });
}

Var log_softmax(Var x) {
  require_rank(x.value(), 2, "log_softmax input");
  const std::size_t N = x.dim(0), C = x.dim(1);
  Tensor out(x.shape());
  const auto& xv = x.value().values();
  for (std::size_t n = 0; n < N; ++n) {
    const double* r = xv.data() + n * C;
    const double mx = *std::max_element(r, r + C);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(r[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < C; ++c) out[n * C + c] = r[c] - lse;
  }
  auto y = std::make_shared<std::vector<double>>(out.values());
  return tape_of(x).record(std::move(out), {x}, [y, N, C](std::span<const double> g,
                                                          std::span<std::vector<double>* const> in) {
    auto& gx = *in[0];
    for (std::size_t n = 0; n < N; ++n) {
      double gs = 0.0;
      for (std::size_t c = 0; c < C; ++c) gs += g[n * C + c];
      for (std::size_t c = 0; c < C; ++c) gx[n * C + c] += g[n * C + c] - std::exp((*y)[n * C + c]) * gs;
    }
  });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t k = 0; k < out.numel(); ++k) out[k] = a.value()[k] + b.value()[k];
  return tape_of(a).record(std::move(out), {a, b}, [](std::span<const double> g,
                                                      std::span<std::vector<double>* const> in) {
    for (auto* gi : in)
      if (gi)
        for (std::size_t k = 0; k < g.size(); ++k) (*gi)[k] += g[k];
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t k = 0; k < out.numel(); ++k) out[k] = a.value()[k] - b.value()[k];
  return tape_of(a).record(std::move(out), {a, b}, [](std::span<const double> g,
                                                      std::span<std::vector<double>* const> in) {
    if (in[0])
      for (std::size_t k = 0; k < g.size(); ++k) (*in[0])[k] += g[k];
    if (in[1])
      for (std::size_t k = 0; k < g.size(); ++k) (*in[1])[k] -= g[k];
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t k = 0; k < out.numel(); ++k) out[k] = a.value()[k] * b.value()[k];
  const Tensor* at = &a.value();
  const Tensor* bt = &b.value();
  return tape_of(a).record(std::move(out), {a, b}, [at, bt](std::span<const double> g,
                                                            std::span<std::vector<double>* const> in) {
    if (in[0])
      for (std::size_t k = 0; k < g.size(); ++k) (*in[0])[k] += g[k] * (*bt)[k];
    if (in[1])
      for (std::size_t k = 0; k < g.size(); ++k) (*in[1])[k] += g[k] * (*at)[k];
  });
}

Var scale(Var x, double factor) {
  Tensor out(x.shape());
  for (std::size_t k = 0; k < out.numel(); ++k) out[k] = x.value()[k] * factor;
  return tape_of(x).record(std::move(out), {x}, [factor](std::span<const double> g,
                                                         std::span<std::vector<double>* const> in) {
    for (std::size_t k = 0; k < g.size(); ++k) (*in[0])[k] += g[k] * factor;
  });
}

Var add_scalar(Var x, double offset) {
  Tensor out(x.shape());
  for (std::size_t k = 0; k < out.numel(); ++k) out[k] = x.value()[k] + offset;
  return tape_of(x).record(std::move(out), {x}, [](std::span<const double> g,
                                                   std::span<std::vector<double>* const> in) {
    for (std::size_t k = 0; k < g.size(); ++k) (*in[0])[k] += g[k];
  });
}

Var sum(Var x) {
  Tensor out = Tensor::scalar(pairwise_sum(x.value().data()));
  return tape_of(x).record(std::move(out), {x}, [](std::span<const double> g,
                                                   std::span<std::vector<double>* const> in) {
    for (auto& v : *in[0]) v += g[0];
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().numel());
  Tensor out = Tensor::scalar(pairwise_sum(x.value().data()) / n);
  return tape_of(x).record(std::move(out), {x}, [n](std::span<const double> g,
                                                    std::span<std::vector<double>* const> in) {
    for (auto& v : *in[0]) v += g[0] / n;
  });
}

Var weighted_sum(std::span<const Var> maps, Var weights) {
  if (maps.empty()) throw DimensionError("weighted_sum: no inputs");
  require_rank(weights.value(), 2, "weighted_sum weights");
  const std::size_t n = maps.size();
  const std::size_t B = maps[0].dim(0);
  if (weights.dim(0) != B || weights.dim(1) != n) {
    throw DimensionError("weighted_sum: weights " + shape_to_string(weights.shape()) + " do not match " +
                         std::to_string(n) + " maps of batch " + std::to_string(B));
  }
  for (const auto& m : maps) {
    if (m.shape() != maps[0].shape()) {
      throw DimensionError("weighted_sum: map shapes differ: " + shape_to_string(maps[0].shape()) + " vs " +
                           shape_to_string(m.shape()));
    }
  }
  const std::size_t per = maps[0].value().numel() / B;
  Tensor out(maps[0].shape());
  const auto& wv = weights.value().values();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      const double wi = wv[b * n + i];
      const double* src = maps[i].value().values().data() + b * per;
      double* dst = out.data().data() + b * per;
      for (std::size_t k = 0; k < per; ++k) dst[k] += wi * src[k];
    }
  }
  std::vector<Var> inputs(maps.begin(), maps.end());
  inputs.push_back(weights);
  std::vector<const Tensor*> values;
  for (const auto& m : maps) values.push_back(&m.value());
  const Tensor* wt = &weights.value();
  return tape_of(weights).record(
      std::move(out), inputs,
      [values, wt, n, B, per](std::span<const double> g, std::span<std::vector<double>* const> in) {
        const auto& wv = wt->values();
        for (std::size_t b = 0; b < B; ++b) {
          const double* go = g.data() + b * per;
          for (std::size_t i = 0; i < n; ++i) {
            if (in[i]) {
              double* gm = in[i]->data() + b * per;
              const double wi = wv[b * n + i];
              for (std::size_t k = 0; k < per; ++k) gm[k] += wi * go[k];
            }
            if (in[n]) {
              const double* src = values[i]->values().data() + b * per;
              double acc = 0.0;
              for (std::size_t k = 0; k < per; ++k) acc += go[k] * src[k];
              (*in[n])[b * n + i] += acc;
            }
          }
        }
      });
}

Var add_n(std::span<const Var> xs) {
  if (xs.empty()) throw DimensionError("add_n: no inputs");
  Tensor out(xs[0].shape());
  for (const auto& x : xs) {
    require_same_shape(xs[0], x, "add_n");
    for (std::size_t k = 0; k < out.numel(); ++k) out[k] += x.value()[k];
  }
  return tape_of(xs[0]).record(std::move(out), std::vector<Var>(xs.begin(), xs.end()),
                               [](std::span<const double> g, std::span<std::vector<double>* const> in) {
                                 for (auto* gi : in)
                                   if (gi)
                                     for (std::size_t k = 0; k < g.size(); ++k) (*gi)[k] += g[k];
                               });
}

Var nchw_to_rows(Var x) {
  require_rank(x.value(), 4, "nchw_to_rows input");
  const std::size_t B = x.dim(0), C = x.dim(1), S = x.dim(2) * x.dim(3);
  Tensor out(Shape{B * S, C});
  const auto& xv = x.value().values();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t s = 0; s < S; ++s) out[(b * S + s) * C + c] = xv[(b * C + c) * S + s];
  return tape_of(x).record(std::move(out), {x}, [B, C, S](std::span<const double> g,
                                                          std::span<std::vector<double>* const> in) {
    auto& gx = *in[0];
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t s = 0; s < S; ++s) gx[(b * C + c) * S + s] += g[(b * S + s) * C + c];
  });
}

Var dropout(Var x, double rate, Mode mode, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0,1)");
  if (mode == Mode::kEval || rate == 0.0) return x;
  auto mask = std::make_shared<std::vector<double>>(x.value().numel());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep = 1.0 / (1.0 - rate);
  for (auto& m : *mask) m = u(rng) >= rate ? keep : 0.0;
  Tensor out(x.shape());
  for (std::size_t k = 0; k < out.numel(); ++k) out[k] = x.value()[k] * (*mask)[k];
  return tape_of(x).record(std::move(out), {x}, [mask](std::span<const double> g,
                                                       std::span<std::vector<double>* const> in) {
    for (std::size_t k = 0; k < g.size(); ++k) (*in[0])[k] += g[k] * (*mask)[k];
  });
}

Var soft_cross_entropy(Var logits, const Tensor& target) {
  require_rank(logits.value(), 2, "cross-entropy logits");
  require_shape(target, logits.shape(), "cross-entropy target");
  const std::size_t N = logits.dim(0), C = logits.dim(1);
  const auto& lv = logits.value().values();
  auto probs = std::make_shared<std::vector<double>>(lv.size());
  std::vector<double> row_loss(N);
  for (std::size_t n = 0; n < N; ++n) {
    const double* r = lv.data() + n * C;
    const double mx = *std::max_element(r, r + C);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(r[c] - mx);
    const double lse = mx + std::log(z);
    double l = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double q = target[n * C + c];
      if (q != 0.0) l -= q * (r[c] - lse);
      (*probs)[n * C + c] = std::exp(r[c] - lse);
    }
    row_loss[n] = l;
  }
  Tensor out = Tensor::scalar(pairwise_sum(row_loss) / static_cast<double>(N));
  auto tgt = std::make_shared<std::vector<double>>(target.values());
  return tape_of(logits).record(std::move(out), {logits}, [probs, tgt, N, C](std::span<const double> g,
                                                                             std::span<std::vector<double>* const> in) {
    auto& gx = *in[0];
    const double s = g[0] / static_cast<double>(N);
    for (std::size_t n = 0; n < N; ++n) {
      double qsum = 0.0;
      for (std::size_t c = 0; c < C; ++c) qsum += (*tgt)[n * C + c];
      for (std::size_t c = 0; c < C; ++c) {
        const auto k = n * C + c;
        gx[k] += s * ((*probs)[k] * qsum - (*tgt)[k]);
      }
    }
  });
}

Var l2_normalize_rows(Var x) {
  require_rank(x.value(), 2, "l2_normalize_rows input");
  const std::size_t N = x.dim(0), D = x.dim(1);
  const auto& xv = x.value().values();
  auto norms = std::make_shared<std::vector<double>>(N);
  Tensor out(x.shape());
  for (std::size_t n = 0; n < N; ++n) {
    double sq = 0.0;
    for (std::size_t d = 0; d < D; ++d) sq += xv[n * D + d] * xv[n * D + d];
    const double nrm = std::sqrt(sq);
    if (!(nrm > 0.0)) throw DegenerateBatchError("l2 normalization: row " + std::to_string(n) + " has zero norm");
    (*norms)[n] = nrm;
    for (std::size_t d = 0; d < D; ++d) out[n * D + d] = xv[n * D + d] / nrm;
  }
  auto y = std::make_shared<std::vector<double>>(out.values());
  return tape_of(x).record(std::move(out), {x}, [y, norms, N, D](std::span<const double> g,
                                                                 std::span<std::vector<double>* const> in) {
    auto& gx = *in[0];
    for (std::size_t n = 0; n < N; ++n) {
      double dot = 0.0;
      for (std::size_t d = 0; d < D; ++d) dot += (*y)[n * D + d] * g[n * D + d];
      for (std::size_t d = 0; d < D; ++d) gx[n * D + d] += (g[n * D + d] - (*y)[n * D + d] * dot) / (*norms)[n];
    }
  });
}

Var pairwise_distances(Var x) {
  require_rank(x.value(), 2, "pairwise_distances input");
  const std::size_t N = x.dim(0), D = x.dim(1);
  if (N < 2) throw DegenerateBatchError("pairwise_distances: need at least two rows");
  const std::size_t P = N * (N - 1) / 2;
  Tensor out(Shape{P});
  const auto& xv = x.value().values();
  std::size_t p = 0;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = i + 1; j < N; ++j, ++p) {
      double sq = 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        const double diff = xv[i * D + d] - xv[j * D + d];
        sq += diff * diff;
      }
      out[p] = std::sqrt(sq);
    }
  auto dist = std::make_shared<std::vector<double>>(out.values());
  const Tensor* xt = &x.value();
  return tape_of(x).record(std::move(out), {x}, [dist, xt, N, D](std::span<const double> g,
                                                                 std::span<std::vector<double>* const> in) {
    auto& gx = *in[0];
    const auto& xv = xt->values();
    std::size_t p = 0;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = i + 1; j < N; ++j, ++p) {
        const double d = (*dist)[p];
        if (d == 0.0 || g[p] == 0.0) continue;
        const double s = g[p] / d;
        for (std::size_t k = 0; k < D; ++k) {
          const double diff = xv[i * D + k] - xv[j * D + k];
          gx[i * D + k] += s * diff;
          gx[j * D + k] -= s * diff;
        }
      }
  });
}

Var linear_combination(std::span<const Var> scalars, std::span<const double> weights) {
  if (scalars.empty() || scalars.size() != weights.size()) {
    throw DimensionError("linear_combination: need one weight per scalar");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].value().numel() != 1) {
      throw DimensionError("linear_combination: input " + std::to_string(i) + " is not a scalar");
    }
    total += weights[i] * scalars[i].value()[0];
  }
  std::vector<double> w(weights.begin(), weights.end());
  return tape_of(scalars[0]).record(Tensor::scalar(total), std::vector<Var>(scalars.begin(), scalars.end()),
                                    [w](std::span<const double> g, std::span<std::vector<double>* const> in) {
                                      for (std::size_t i = 0; i < w.size(); ++i)
                                        if (in[i]) (*in[i])[0] += w[i] * g[0];
                                    });
}

}  // namespace ops
}  // namespace visnet
