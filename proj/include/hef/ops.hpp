/* Copyright 2026 The hefriendly Authors.
 * This program is Licensed under the Apache License, Version 2.0
 * (the "License"); you may not use this file except in compliance
 * with the License. You may obtain a copy of the License at
 *   http://www.apache.org/licenses/LICENSE-2.0
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License. See accompanying LICENSE file.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hef/autodiff.hpp"
#include "hef/errors.hpp"
#include "hef/random.hpp"
#include "hef/tensor.hpp"

namespace hef {

enum class Padding { Valid, Same };
enum class Mode { Train, Eval };

/// Output size and leading/trailing padding of one spatial axis.
struct AxisGeometry {
  std::size_t out = 0;
  std::size_t pad_before = 0;
  std::size_t pad_after = 0;
};

/// 'same' follows ceil(n/stride) with symmetric zero padding; the odd pixel
/// goes to the bottom/right.
inline AxisGeometry conv_axis(std::size_t n, std::size_t k, std::size_t stride, Padding padding) {
  if (stride == 0) throw ContractError("stride must be >= 1");
  if (k == 0) throw DimensionError("kernel size must be positive");
  AxisGeometry g;
  if (padding == Padding::Valid) {
    if (k > n)
      throw DimensionError("kernel " + std::to_string(k) + " larger than input " + std::to_string(n));
    g.out = (n - k) / stride + 1;
    return g;
  }
  g.out = (n + stride - 1) / stride;
  std::size_t needed = (g.out - 1) * stride + k;
  std::size_t total = needed > n ? needed - n : 0;
  g.pad_before = total / 2;
  g.pad_after = total - g.pad_before;
  return g;
}

namespace detail {

inline void expect_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
}

inline void expect_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------- linear ops

/// y[n,j] = sum_k w[j,k] x[n,k] + b[j]
inline Var dense(Tape& tape, Var x, Var w, Var b) {
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(w);
  const Tensor& bv = tape.value(b);
  detail::expect_rank(xv, 2, "dense");
  detail::expect_rank(wv, 2, "dense");
  detail::expect_rank(bv, 1, "dense");
  const std::size_t n = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
  if (wv.dim(1) != in || bv.dim(0) != out)
    throw DimensionError("dense: x " + shape_str(xv.shape()) + ", w " + shape_str(wv.shape()) +
                         ", b " + shape_str(bv.shape()) + " do not conform");
  Tensor y({n, out});
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = &xv.data()[i * in];
    for (std::size_t j = 0; j < out; ++j) {
      const double* wr = &wv.data()[j * in];
      double acc = bv[j];
      for (std::size_t k = 0; k < in; ++k) acc += wr[k] * xr[k];
      y[i * out + j] = acc;
    }
  }
  return tape.record(OpKind::Dense, {x, w, b}, std::move(y), {}, [=](Tape& t, const TapeNode& node) {
    auto dy = t.output_grad(node);
    const auto xs = node.inputs[0], ws = node.inputs[1], bs = node.inputs[2];
    const auto xd = t.value(xs).data();
    const auto wd = t.value(ws).data();
    if (t.requires_grad(xs)) {
      auto dx = t.grad(xs);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out; ++j) {
          const double g = dy[i * out + j];
          for (std::size_t k = 0; k < in; ++k) dx[i * in + k] += g * wd[j * in + k];
        }
    }
    if (t.requires_grad(ws)) {
      auto dw = t.grad(ws);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out; ++j) {
          const double g = dy[i * out + j];
          for (std::size_t k = 0; k < in; ++k) dw[j * in + k] += g * xd[i * in + k];
        }
    }
    if (t.requires_grad(bs)) {
      auto db = t.grad(bs);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out; ++j) db[j] += dy[i * out + j];
    }
  });
}

struct Conv2dOptions {
  std::size_t stride = 1;
  Padding padding = Padding::Valid;
  /// Per-input-channel value used for padded cells; empty means zeros.
  std::vector<double> pad_fill;
};

/// Cross-correlation of x[n,c,h,w] with k[o,c,kh,kw] plus per-output bias.
inline Var conv2d(Tape& tape, Var x, Var k, Var b, const Conv2dOptions& opt = {}) {
  const Tensor& xv = tape.value(x);
  const Tensor& kv = tape.value(k);
  const Tensor& bv = tape.value(b);
  detail::expect_rank(xv, 4, "conv2d");
  detail::expect_rank(kv, 4, "conv2d");
  detail::expect_rank(bv, 1, "conv2d");
  const std::size_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::size_t o = kv.dim(0), kh = kv.dim(2), kw = kv.dim(3);
  if (kv.dim(1) != c || bv.dim(0) != o)
    throw DimensionError("conv2d: x " + shape_str(xv.shape()) + ", kernel " + shape_str(kv.shape()) +
                         ", bias " + shape_str(bv.shape()) + " do not conform");
  if (!opt.pad_fill.empty() && opt.pad_fill.size() != c)
    throw DimensionError("conv2d: pad_fill needs one value per input channel");
  const AxisGeometry gy = conv_axis(h, kh, opt.stride, opt.padding);
  const AxisGeometry gx = conv_axis(w, kw, opt.stride, opt.padding);
  const std::size_t hp = h + gy.pad_before + gy.pad_after;
  const std::size_t wp = w + gx.pad_before + gx.pad_after;
  const std::size_t oh = gy.out, ow = gx.out, s = opt.stride;

  Tensor xp({n, c, hp, wp});
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t ic = 0; ic < c; ++ic) {
      double* dst = &xp[(in * c + ic) * hp * wp];
      std::fill(dst, dst + hp * wp, opt.pad_fill.empty() ? 0.0 : opt.pad_fill[ic]);
      const double* src = &xv.data()[(in * c + ic) * h * w];
      for (std::size_t yy = 0; yy < h; ++yy)
        std::copy(src + yy * w, src + (yy + 1) * w, dst + (yy + gy.pad_before) * wp + gx.pad_before);
    }

  Tensor y({n, o, oh, ow});
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t oc = 0; oc < o; ++oc) {
      double* yo = &y[(in * o + oc) * oh * ow];
      std::fill(yo, yo + oh * ow, bv[oc]);
      for (std::size_t ic = 0; ic < c; ++ic) {
        const double* xc = &xp[(in * c + ic) * hp * wp];
        for (std::size_t ky = 0; ky < kh; ++ky)
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const double wt = kv[((oc * c + ic) * kh + ky) * kw + kx];
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const double* xr = xc + (oy * s + ky) * wp + kx;
              double* yr = yo + oy * ow;
              for (std::size_t ox = 0; ox < ow; ++ox) yr[ox] += wt * xr[ox * s];
            }
          }
      }
    }

  std::vector<Tensor> saved;
  saved.push_back(std::move(xp));
  return tape.record(
      OpKind::Conv2d, {x, k, b}, std::move(y), std::move(saved),
      [=](Tape& t, const TapeNode& node) {
        auto dy = t.output_grad(node);
        const Tensor& xpad = node.saved[0];
        const auto xs = node.inputs[0], ks = node.inputs[1], bs = node.inputs[2];
        const auto kd = t.value(ks).data();
        if (t.requires_grad(bs)) {
          auto db = t.grad(bs);
          for (std::size_t in = 0; in < n; ++in)
            for (std::size_t oc = 0; oc < o; ++oc)
              for (std::size_t p = 0; p < oh * ow; ++p) db[oc] += dy[(in * o + oc) * oh * ow + p];
        }
        if (t.requires_grad(ks)) {
          auto dk = t.grad(ks);
          for (std::size_t in = 0; in < n; ++in)
            for (std::size_t oc = 0; oc < o; ++oc) {
              const double* go = &dy[(in * o + oc) * oh * ow];
              for (std::size_t ic = 0; ic < c; ++ic) {
                const double* xc = &xpad[(in * c + ic) * hp * wp];
                for (std::size_t ky = 0; ky < kh; ++ky)
                  for (std::size_t kx = 0; kx < kw; ++kx) {
                    double acc = 0.0;
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                      const double* xr = xc + (oy * s + ky) * wp + kx;
                      const double* gr = go + oy * ow;
                      for (std::size_t ox = 0; ox < ow; ++ox) acc += gr[ox] * xr[ox * s];
                    }
                    dk[((oc * c + ic) * kh + ky) * kw + kx] += acc;
                  }
              }
            }
        }
        if (t.requires_grad(xs)) {
          std::vector<double> dxp(n * c * hp * wp, 0.0);
          for (std::size_t in = 0; in < n; ++in)
            for (std::size_t oc = 0; oc < o; ++oc) {
              const double* go = &dy[(in * o + oc) * oh * ow];
              for (std::size_t ic = 0; ic < c; ++ic) {
                double* dc = &dxp[(in * c + ic) * hp * wp];
                for (std::size_t ky = 0; ky < kh; ++ky)
                  for (std::size_t kx = 0; kx < kw; ++kx) {
                    const double wt = kd[((oc * c + ic) * kh + ky) * kw + kx];
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                      double* dr = dc + (oy * s + ky) * wp + kx;
                      const double* gr = go + oy * ow;
                      for (std::size_t ox = 0; ox < ow; ++ox) dr[ox * s] += wt * gr[ox];
                    }
                  }
              }
            }
          auto dx = t.grad(xs);
          for (std::size_t in = 0; in < n; ++in)
            for (std::size_t ic = 0; ic < c; ++ic)
              for (std::size_t yy = 0; yy < h; ++yy)
                for (std::size_t xx = 0; xx < w; ++xx)
                  dx[((in * c + ic) * h + yy) * w + xx] +=
                      dxp[((in * c + ic) * hp + yy + gy.pad_before) * wp + xx + gx.pad_before];
        }
      });
}

// ------------------------------------------------------------------- pooling

struct Pool2dOptions {
  std::size_t window_h = 2;
  std::size_t window_w = 2;
  std::size_t stride = 2;
};

namespace detail {

struct PoolGeometry {
  std::size_t n, c, h, w, oh, ow;
};

inline PoolGeometry pool_geometry(const Tensor& xv, const Pool2dOptions& opt, const char* op) {
  expect_rank(xv, 4, op);
  if (opt.window_h > xv.dim(2) || opt.window_w > xv.dim(3))
    throw DimensionError(std::string(op) + ": window " + std::to_string(opt.window_h) + "x" +
                         std::to_string(opt.window_w) + " exceeds input " + shape_str(xv.shape()));
  PoolGeometry g{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), 0, 0};
  g.oh = conv_axis(g.h, opt.window_h, opt.stride, Padding::Valid).out;
  g.ow = conv_axis(g.w, opt.window_w, opt.stride, Padding::Valid).out;
  return g;
}

}  // namespace detail

/// Mean over each window (valid windows only).
inline Var avg_pool(Tape& tape, Var x, const Pool2dOptions& opt) {
  const Tensor& xv = tape.value(x);
  const auto g = detail::pool_geometry(xv, opt, "avg_pool");
  const std::size_t kh = opt.window_h, kw = opt.window_w, s = opt.stride;
  const double inv = 1.0 / static_cast<double>(kh * kw);
  Tensor y({g.n, g.c, g.oh, g.ow});
  for (std::size_t p = 0; p < g.n * g.c; ++p) {
    const double* xc = &xv.data()[p * g.h * g.w];
    for (std::size_t oy = 0; oy < g.oh; ++oy)
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        double acc = 0.0;
        for (std::size_t ky = 0; ky < kh; ++ky)
          for (std::size_t kx = 0; kx < kw; ++kx) acc += xc[(oy * s + ky) * g.w + ox * s + kx];
        y[(p * g.oh + oy) * g.ow + ox] = acc * inv;
      }
  }
  return tape.record(OpKind::AvgPool, {x}, std::move(y), {}, [=](Tape& t, const TapeNode& node) {
    auto dy = t.output_grad(node);
    auto dx = t.grad(node.inputs[0]);
    for (std::size_t p = 0; p < g.n * g.c; ++p)
      for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          const double gv = dy[(p * g.oh + oy) * g.ow + ox] * inv;
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx)
              dx[p * g.h * g.w + (oy * s + ky) * g.w + ox * s + kx] += gv;
        }
  });
}

/// Max over each window; the gradient goes to the first maximal element.
inline Var max_pool(Tape& tape, Var x, const Pool2dOptions& opt) {
  const Tensor& xv = tape.value(x);
  const auto g = detail::pool_geometry(xv, opt, "max_pool");
  const std::size_t kh = opt.window_h, kw = opt.window_w, s = opt.stride;
  Tensor y({g.n, g.c, g.oh, g.ow});
  std::vector<std::size_t> argmax(y.size());
  for (std::size_t p = 0; p < g.n * g.c; ++p) {
    const double* xc = &xv.data()[p * g.h * g.w];
    for (std::size_t oy = 0; oy < g.oh; ++oy)
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t at = (oy * s) * g.w + ox * s;
        for (std::size_t ky = 0; ky < kh; ++ky)
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::size_t idx = (oy * s + ky) * g.w + ox * s + kx;
            if (xc[idx] > best) {
              best = xc[idx];
              at = idx;
            }
          }
        const std::size_t o = (p * g.oh + oy) * g.ow + ox;
        y[o] = best;
        argmax[o] = p * g.h * g.w + at;
      }
  }
  return tape.record(OpKind::MaxPool, {x}, std::move(y), {},
                     [argmax = std::move(argmax)](Tape& t, const TapeNode& node) {
                       auto dy = t.output_grad(node);
                       auto dx = t.grad(node.inputs[0]);
                       for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += dy[o];
                     });
}

// ---------------------------------------------------------------- batch norm

/// Running statistics and hyperparameters of one batch-norm layer.
struct BatchNormState {
  Tensor* running_mean = nullptr;
  Tensor* running_var = nullptr;
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Per-channel normalization of x[n,c] or x[n,c,h,w].
///
/// Eval mode uses the running statistics. Train mode normalizes with the
/// biased batch variance and updates the running statistics by exponential
/// moving average (unbiased variance), as PyTorch does.
inline Var batch_norm(Tape& tape, Var x, Var gamma, Var beta, const BatchNormState& st, Mode mode) {
  const Tensor& xv = tape.value(x);
  const Tensor& gv = tape.value(gamma);
  const Tensor& bv = tape.value(beta);
  if (!st.running_mean || !st.running_var) throw ContractError("batch_norm: missing running stats");
  Tensor& rm = *st.running_mean;
  Tensor& rv = *st.running_var;
  if (xv.rank() != 2 && xv.rank() != 4)
    throw DimensionError("batch_norm: expected rank 2 or 4 input, got " + shape_str(xv.shape()));
  const std::size_t n = xv.dim(0), c = xv.dim(1);
  const std::size_t spatial = xv.rank() == 4 ? xv.dim(2) * xv.dim(3) : 1;
  for (const Tensor* p : {&gv, &bv, static_cast<const Tensor*>(&rm), static_cast<const Tensor*>(&rv)})
    if (p->rank() != 1 || p->dim(0) != c)
      throw DimensionError("batch_norm: parameter shape " + shape_str(p->shape()) +
                           " does not match channel count " + std::to_string(c));
  for (std::size_t ch = 0; ch < c; ++ch)
    if (!(rv[ch] >= 0.0))
      throw InvariantError("batch_norm: running variance of channel " + std::to_string(ch) +
                           " is negative");
  if (!(st.eps >= 0.0)) throw ContractError("batch_norm: eps must be non-negative");

  const std::size_t m = n * spatial;
  auto at = [c, spatial](std::size_t in, std::size_t ch, std::size_t p) { return (in * c + ch) * spatial + p; };

  Tensor mean({c}), inv_std({c});
  if (mode == Mode::Train) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double sum = 0.0;
      for (std::size_t in = 0; in < n; ++in)
        for (std::size_t p = 0; p < spatial; ++p) sum += xv[at(in, ch, p)];
      const double mu = sum / static_cast<double>(m);
      double sq = 0.0;
      for (std::size_t in = 0; in < n; ++in)
        for (std::size_t p = 0; p < spatial; ++p) {
          const double d = xv[at(in, ch, p)] - mu;
          sq += d * d;
        }
      const double var = sq / static_cast<double>(m);
      mean[ch] = mu;
      inv_std[ch] = 1.0 / std::sqrt(var + st.eps);
      const double unbiased = m > 1 ? sq / static_cast<double>(m - 1) : var;
      rm[ch] = (1.0 - st.momentum) * rm[ch] + st.momentum * mu;
      rv[ch] = (1.0 - st.momentum) * rv[ch] + st.momentum * unbiased;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = rm[ch];
      inv_std[ch] = 1.0 / std::sqrt(rv[ch] + st.eps);
    }
  }

  Tensor xhat(xv.shape()), y(xv.shape());
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < spatial; ++p) {
        const std::size_t i = at(in, ch, p);
        xhat[i] = (xv[i] - mean[ch]) * inv_std[ch];
        y[i] = gv[ch] * xhat[i] + bv[ch];
      }

  std::vector<Tensor> saved;
  saved.push_back(std::move(xhat));
  saved.push_back(std::move(inv_std));
  const bool train = mode == Mode::Train;
  return tape.record(
      OpKind::BatchNorm, {x, gamma, beta}, std::move(y), std::move(saved),
      [=](Tape& t, const TapeNode& node) {
        auto dy = t.output_grad(node);
        const Tensor& xh = node.saved[0];
        const Tensor& is = node.saved[1];
        const auto xs = node.inputs[0], gs = node.inputs[1], bs = node.inputs[2];
        const auto gd = t.value(gs).data();
        std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
        for (std::size_t in = 0; in < n; ++in)
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t p = 0; p < spatial; ++p) {
              const std::size_t i = at(in, ch, p);
              sum_dy[ch] += dy[i];
              sum_dy_xhat[ch] += dy[i] * xh[i];
            }
        if (t.requires_grad(gs)) {
          auto dg = t.grad(gs);
          for (std::size_t ch = 0; ch < c; ++ch) dg[ch] += sum_dy_xhat[ch];
        }
        if (t.requires_grad(bs)) {
          auto db = t.grad(bs);
          for (std::size_t ch = 0; ch < c; ++ch) db[ch] += sum_dy[ch];
        }
        if (t.requires_grad(xs)) {
          auto dx = t.grad(xs);
          const double md = static_cast<double>(m);
          for (std::size_t in = 0; in < n; ++in)
            for (std::size_t ch = 0; ch < c; ++ch)
              for (std::size_t p = 0; p < spatial; ++p) {
                const std::size_t i = at(in, ch, p);
                if (train)
                  dx[i] += gd[ch] * is[ch] / md *
                           (md * dy[i] - sum_dy[ch] - xh[i] * sum_dy_xhat[ch]);
                else
                  dx[i] += gd[ch] * is[ch] * dy[i];
              }
        }
      });
}

// --------------------------------------------------------------- activations

/// Fixed coefficients of the quadratic ReLU approximation 0.00047x^2 + 0.5x.
inline constexpr double kApproxReluA = 0.00047;
inline constexpr double kApproxReluB = 0.5;

/// max(0, x); the derivative at 0 is taken as 0.
inline Var relu(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return tape.record(OpKind::Relu, {x}, std::move(y), {}, [](Tape& t, const TapeNode& node) {
    auto dy = t.output_grad(node);
    const auto xd = t.value(node.inputs[0]).data();
    auto dx = t.grad(node.inputs[0]);
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (xd[i] > 0.0) dx[i] += dy[i];
  });
}

inline Var square(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] * xv[i];
  return tape.record(OpKind::Square, {x}, std::move(y), {}, [](Tape& t, const TapeNode& node) {
    auto dy = t.output_grad(node);
    const auto xd = t.value(node.inputs[0]).data();
    auto dx = t.grad(node.inputs[0]);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += 2.0 * xd[i] * dy[i];
  });
}

inline Var approx_relu(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i)
    y[i] = kApproxReluA * xv[i] * xv[i] + kApproxReluB * xv[i];
  return tape.record(OpKind::ApproxRelu, {x}, std::move(y), {}, [](Tape& t, const TapeNode& node) {
    auto dy = t.output_grad(node);
    const auto xd = t.value(node.inputs[0]).data();
    auto dx = t.grad(node.inputs[0]);
    for (std::size_t i = 0; i < dx.size(); ++i)
      dx[i] += (2.0 * kApproxReluA * xd[i] + kApproxReluB) * dy[i];
  });
}

namespace detail {

inline void expect_scalar(const Tensor& t, const char* what) {
  if (t.size() != 1)
    throw DimensionError(std::string(what) + " must be a scalar, got " + shape_str(t.shape()));
}

/// Shared forward/backward of lambda*(a x^2 + b x) + (1-lambda)*relu(x).
inline Var blended_poly(Tape& tape, OpKind kind, Var x, Var a, Var b, double lambda) {
  const Tensor& xv = tape.value(x);
  expect_scalar(tape.value(a), "polynomial coefficient a");
  expect_scalar(tape.value(b), "polynomial coefficient b");
  const double av = tape.value(a)[0], bv = tape.value(b)[0];
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    const double poly = av * v * v + bv * v;
    const double r = v > 0.0 ? v : 0.0;
    if (lambda == 1.0)
      y[i] = poly;
    else if (lambda == 0.0)
      y[i] = r;
    else
      y[i] = (1.0 - lambda) * r + lambda * poly;
  }
  return tape.record(kind, {x, a, b}, std::move(y), {}, [=](Tape& t, const TapeNode& node) {
    auto dy = t.output_grad(node);
    const auto xs = node.inputs[0], as = node.inputs[1], bs = node.inputs[2];
    const auto xd = t.value(xs).data();
    if (t.requires_grad(xs)) {
      auto dx = t.grad(xs);
      for (std::size_t i = 0; i < dx.size(); ++i) {
        const double relu_d = xd[i] > 0.0 ? 1.0 : 0.0;
        dx[i] += dy[i] * ((1.0 - lambda) * relu_d + lambda * (2.0 * av * xd[i] + bv));
      }
    }
    if (t.requires_grad(as) || t.requires_grad(bs)) {
      double sa = 0.0, sb = 0.0;
      for (std::size_t i = 0; i < xd.size(); ++i) {
        sa += dy[i] * xd[i] * xd[i];
        sb += dy[i] * xd[i];
      }
      if (t.requires_grad(as)) t.grad(as)[0] += lambda * sa;
      if (t.requires_grad(bs)) t.grad(bs)[0] += lambda * sb;
    }
  });
}

}  // namespace detail

/// a x^2 + b x with scalar a, b shared by every element.
inline Var trainable_poly(Tape& tape, Var x, Var a, Var b) {
  return detail::blended_poly(tape, OpKind::TrainablePoly, x, a, b, 1.0);
}

/// (1 - lambda) relu(x) + lambda (a x^2 + b x); lambda must lie in [0, 1].
inline Var weighted_act(Tape& tape, Var x, Var a, Var b, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ContractError("weighted activation: lambda " + std::to_string(lambda) +
                        " outside [0, 1]");
  return detail::blended_poly(tape, OpKind::Weighted, x, a, b, lambda);
}

// -------------------------------------------------------------- shape / misc

/// [n, ...] -> [n, prod(...)]
inline Var flatten(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  if (xv.rank() < 2) throw DimensionError("flatten: expected rank >= 2, got " + shape_str(xv.shape()));
  Tensor y = xv.reshaped({xv.dim(0), xv.size() / xv.dim(0)});
  return tape.record(OpKind::Flatten, {x}, std::move(y), {}, [](Tape& t, const TapeNode& node) {
    auto dy = t.output_grad(node);
    auto dx = t.grad(node.inputs[0]);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
  });
}

/// Inverted dropout in train mode, identity in eval mode.
inline Var dropout(Tape& tape, Var x, double p, Rng& rng, Mode mode) {
  if (!(p >= 0.0 && p < 1.0)) throw ContractError("dropout: p must lie in [0, 1)");
  if (mode == Mode::Eval || p == 0.0) return x;
  const Tensor& xv = tape.value(x);
  Tensor mask(xv.shape()), y(xv.shape());
  const double keep = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mask[i] = uniform01(rng) >= p ? keep : 0.0;
    y[i] = xv[i] * mask[i];
  }
  std::vector<Tensor> saved;
  saved.push_back(std::move(mask));
  return tape.record(OpKind::Dropout, {x}, std::move(y), std::move(saved),
                     [](Tape& t, const TapeNode& node) {
                       auto dy = t.output_grad(node);
                       auto dx = t.grad(node.inputs[0]);
                       for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * node.saved[0][i];
                     });
}

inline Var scale(Tape& tape, Var x, double c) {
  const Tensor& xv = tape.value(x);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = c * xv[i];
  return tape.record(OpKind::Scale, {x}, std::move(y), {}, [c](Tape& t, const TapeNode& node) {
    auto dy = t.output_grad(node);
    auto dx = t.grad(node.inputs[0]);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += c * dy[i];
  });
}

inline Var add(Tape& tape, Var x, Var y) {
  const Tensor& xv = tape.value(x);
  const Tensor& yv = tape.value(y);
  detail::expect_same_shape(xv, yv, "add");
  Tensor z(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) z[i] = xv[i] + yv[i];
  return tape.record(OpKind::Add, {x, y}, std::move(z), {}, [](Tape& t, const TapeNode& node) {
    auto dz = t.output_grad(node);
    for (auto in : node.inputs) {
      if (!t.requires_grad(in)) continue;
      auto d = t.grad(in);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dz[i];
    }
  });
}

inline Var sum(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  double s = 0.0;
  for (double v : xv.data()) s += v;
  return tape.record(OpKind::Sum, {x}, Tensor::scalar(s), {}, [](Tape& t, const TapeNode& node) {
    const double g = t.output_grad(node)[0];
    auto dx = t.grad(node.inputs[0]);
    for (auto& d : dx) d += g;
  });
}

/// Row-wise log-softmax of x[n, k], stabilized by max subtraction.
inline Var log_softmax(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  detail::expect_rank(xv, 2, "log_softmax");
  const std::size_t n = xv.dim(0), k = xv.dim(1);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = &xv.data()[i * k];
    const double mx = *std::max_element(r, r + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(r[j] - mx);
    const double lz = std::log(z) + mx;
    for (std::size_t j = 0; j < k; ++j) y[i * k + j] = r[j] - lz;
  }
  return tape.record(OpKind::LogSoftmax, {x}, std::move(y), {}, [n, k](Tape& t, const TapeNode& node) {
    auto dy = t.output_grad(node);
    const auto yd = t.value(node.output).data();
    auto dx = t.grad(node.inputs[0]);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += dy[i * k + j];
      for (std::size_t j = 0; j < k; ++j) dx[i * k + j] += dy[i * k + j] - std::exp(yd[i * k + j]) * s;
    }
  });
}

/// Mean over rows of -logp[i, labels[i]].
inline Var nll_loss(Tape& tape, Var logp, std::span<const std::size_t> labels) {
  const Tensor& lv = tape.value(logp);
  detail::expect_rank(lv, 2, "nll_loss");
  const std::size_t n = lv.dim(0), k = lv.dim(1);
  if (labels.size() != n)
    throw DimensionError("nll_loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= k)
      throw DataError("class index " + std::to_string(labels[i]) + " out of range for " +
                      std::to_string(k) + " classes");
    s -= lv[i * k + labels[i]];
  }
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return tape.record(OpKind::NllLoss, {logp}, Tensor::scalar(s / static_cast<double>(n)), {},
                     [lab = std::move(lab), n, k](Tape& t, const TapeNode& node) {
                       const double g = t.output_grad(node)[0] / static_cast<double>(n);
                       auto d = t.grad(node.inputs[0]);
                       for (std::size_t i = 0; i < n; ++i) d[i * k + lab[i]] -= g;
                     });
}

/// Mean over rows of -sum_j q[i,j] logp[i,j] with a constant target q.
inline Var soft_cross_entropy(Tape& tape, Var logp, const Tensor& target) {
  const Tensor& lv = tape.value(logp);
  detail::expect_rank(lv, 2, "soft_cross_entropy");
  detail::expect_same_shape(lv, target, "soft_cross_entropy");
  const std::size_t n = lv.dim(0);
  double s = 0.0;
  for (std::size_t i = 0; i < lv.size(); ++i) s -= target[i] * lv[i];
  std::vector<Tensor> saved{target};
  return tape.record(OpKind::SoftCrossEntropy, {logp}, Tensor::scalar(s / static_cast<double>(n)),
                     std::move(saved), [n](Tape& t, const TapeNode& node) {
                       const double g = t.output_grad(node)[0] / static_cast<double>(n);
                       auto d = t.grad(node.inputs[0]);
                       for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g * node.saved[0][i];
                     });
}

/// Standard cross-entropy of raw logits against integer labels.
inline Var cross_entropy(Tape& tape, Var logits, std::span<const std::size_t> labels) {
  return nll_loss(tape, log_softmax(tape, logits), labels);
}

}  // namespace hef
