#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "csab/log.hpp"
#include "csab/tape.hpp"
#include "csab/tensor.hpp"

namespace csab {

enum class Padding { same, valid };

namespace detail {

template <typename T>
using MatRM =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

inline void require_rank(const Shape& s, std::size_t rank, const char* what) {
  require(s.size() == rank, std::string(what) + ": expected rank " +
                                std::to_string(rank) + " tensor, got " +
                                shape_str(s));
}

// Output size and leading pad for one spatial axis.
struct AxisPlan {
  std::size_t out;
  std::ptrdiff_t pad;
};

inline AxisPlan conv_axis(std::size_t in, std::size_t k, std::size_t stride,
                          Padding padding) {
  if (padding == Padding::valid) {
    return {(in - k) / stride + 1, 0};
  }
  std::size_t out = (in + stride - 1) / stride;
  std::ptrdiff_t total = static_cast<std::ptrdiff_t>((out - 1) * stride + k) -
                         static_cast<std::ptrdiff_t>(in);
  if (total < 0) total = 0;
  return {out, total / 2};
}

// Unpacks conv patches into a [N*Ho*Wo, kh*kw*Cin] matrix (zeros outside).
template <typename T>
Tensor<T> im2col(const Tensor<T>& x, std::size_t kh, std::size_t kw,
                 std::size_t stride, AxisPlan hp, AxisPlan wp) {
  const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const std::size_t rows = N * hp.out * wp.out;
  const std::size_t cols = kh * kw * C;
  Tensor<T> m({rows, cols});
  T* out = m.data();
  const T* in = x.data();
  std::size_t row = 0;
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t oh = 0; oh < hp.out; ++oh) {
      for (std::size_t ow = 0; ow < wp.out; ++ow, ++row) {
        T* dst = out + row * cols;
        for (std::size_t i = 0; i < kh; ++i) {
          const std::ptrdiff_t ih =
              static_cast<std::ptrdiff_t>(oh * stride + i) - hp.pad;
          for (std::size_t j = 0; j < kw; ++j) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(ow * stride + j) - wp.pad;
            T* cell = dst + (i * kw + j) * C;
            if (ih >= 0 && ih < static_cast<std::ptrdiff_t>(H) && iw >= 0 &&
                iw < static_cast<std::ptrdiff_t>(W)) {
              const T* src = in + ((n * H + ih) * W + iw) * C;
              std::copy(src, src + C, cell);
            }
            // padded region stays zero
          }
        }
      }
    }
  }
  return m;
}

// Scatter-add of patch gradients back onto the input layout.
template <typename T>
void col2im_add(const Tensor<T>& cols, Tensor<T>& dx, std::size_t kh,
                std::size_t kw, std::size_t stride, AxisPlan hp, AxisPlan wp) {
  const std::size_t N = dx.dim(0), H = dx.dim(1), W = dx.dim(2), C = dx.dim(3);
  const std::size_t ncols = kh * kw * C;
  const T* src = cols.data();
  T* out = dx.data();
  std::size_t row = 0;
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t oh = 0; oh < hp.out; ++oh) {
      for (std::size_t ow = 0; ow < wp.out; ++ow, ++row) {
        const T* patch = src + row * ncols;
        for (std::size_t i = 0; i < kh; ++i) {
          const std::ptrdiff_t ih =
              static_cast<std::ptrdiff_t>(oh * stride + i) - hp.pad;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t j = 0; j < kw; ++j) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(ow * stride + j) - wp.pad;
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
            T* cell = out + ((n * H + ih) * W + iw) * C;
            const T* g = patch + (i * kw + j) * C;
            for (std::size_t c = 0; c < C; ++c) cell[c] += g[c];
          }
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and structural ops
// ---------------------------------------------------------------------------

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  check_same_shape(av, bv, "add");
  Tensor<T> out = av;
  add_inplace(out, bv);
  return tape.push("add", {a, b}, std::move(out),
                   [a, b](Tape<T>& t, const Tensor<T>& g) {
                     t.accumulate_grad(a, g);
                     t.accumulate_grad(b, g);
                   });
}

template <typename T>
Var scale(Tape<T>& tape, Var x, T factor) {
  Tensor<T> out = tape.value(x);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= factor;
  return tape.push("scale", {x}, std::move(out),
                   [x, factor](Tape<T>& t, const Tensor<T>& g) {
                     Tensor<T> gx = g;
                     for (std::size_t i = 0; i < gx.numel(); ++i)
                       gx[i] *= factor;
                     t.accumulate_grad(x, gx);
                   });
}

template <typename T>
Var sum_all(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  T s = 0;
  for (std::size_t i = 0; i < xv.numel(); ++i) s += xv[i];
  return tape.push("sum", {x}, Tensor<T>::scalar(s),
                   [x](Tape<T>& t, const Tensor<T>& g) {
                     Tensor<T> gx(t.value(x).shape(), g[0]);
                     t.accumulate_grad(x, gx);
                   });
}

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape new_shape) {
  Tensor<T> out = tape.value(x).reshaped(new_shape);
  return tape.push("reshape", {x}, std::move(out),
                   [x](Tape<T>& t, const Tensor<T>& g) {
                     t.accumulate_grad(x, g.reshaped(t.value(x).shape()));
                   });
}

// Picks x[flat_index] out as a scalar node.
template <typename T>
Var select_scalar(Tape<T>& tape, Var x, std::size_t flat_index) {
  const Tensor<T>& xv = tape.value(x);
  detail::require(flat_index < xv.numel(),
                  "select_scalar: index " + std::to_string(flat_index) +
                      " out of range for " + shape_str(xv.shape()));
  return tape.push("select", {x}, Tensor<T>::scalar(xv[flat_index]),
                   [x, flat_index](Tape<T>& t, const Tensor<T>& g) {
                     Tensor<T> gx(t.value(x).shape());
                     gx[flat_index] = g[0];
                     t.accumulate_grad(x, gx);
                   });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  Tensor<T> out = tape.value(x);
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = out[i] > T(0) ? out[i] : T(0);
  return tape.push("relu", {x}, std::move(out),
                   [x](Tape<T>& t, const Tensor<T>& g) {
                     const Tensor<T>& xv = t.value(x);
                     Tensor<T> gx(g.shape());
                     for (std::size_t i = 0; i < g.numel(); ++i)
                       gx[i] = xv[i] > T(0) ? g[i] : T(0);
                     t.accumulate_grad(x, gx);
                   });
}

// Overflow-safe logistic: evaluate on the side where exp() stays bounded.
template <typename T>
T sigmoid_scalar(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var x) {
  Tensor<T> out = tape.value(x);
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = sigmoid_scalar(out[i]);
  Tensor<T> saved = out;  // d/dx = y (1 - y) needs the output
  return tape.push("sigmoid", {x}, std::move(out),
                   [x, saved = std::move(saved)](Tape<T>& t,
                                                 const Tensor<T>& g) {
                     Tensor<T> gx(g.shape());
                     for (std::size_t i = 0; i < g.numel(); ++i)
                       gx[i] = g[i] * saved[i] * (T(1) - saved[i]);
                     t.accumulate_grad(x, gx);
                   });
}

// Softmax over the last axis of a [N, K] tensor.
template <typename T>
Var softmax(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  detail::require_rank(xv.shape(), 2, "softmax");
  const std::size_t N = xv.dim(0), K = xv.dim(1);
  Tensor<T> out(xv.shape());
  for (std::size_t n = 0; n < N; ++n) {
    const T* row = xv.data() + n * K;
    T* orow = out.data() + n * K;
    T mx = row[0];
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    T denom = 0;
    for (std::size_t k = 0; k < K; ++k) {
      orow[k] = std::exp(row[k] - mx);
      denom += orow[k];
    }
    for (std::size_t k = 0; k < K; ++k) orow[k] /= denom;
  }
  Tensor<T> saved = out;
  return tape.push(
      "softmax", {x}, std::move(out),
      [x, N, K, saved = std::move(saved)](Tape<T>& t, const Tensor<T>& g) {
        // dx_k = y_k (g_k - sum_j g_j y_j), rowwise
        Tensor<T> gx(saved.shape());
        for (std::size_t n = 0; n < N; ++n) {
          const T* y = saved.data() + n * K;
          const T* gr = g.data() + n * K;
          T dot = 0;
          for (std::size_t k = 0; k < K; ++k) dot += gr[k] * y[k];
          T* gxr = gx.data() + n * K;
          for (std::size_t k = 0; k < K; ++k) gxr[k] = y[k] * (gr[k] - dot);
        }
        t.accumulate_grad(x, gx);
      });
}

// ---------------------------------------------------------------------------
// Broadcast multiply
// ---------------------------------------------------------------------------

// Elementwise product with limited broadcasting. Supported pairings:
//   [N,H,W,C] * [N,H,W,C]   plain elementwise
//   [N,H,W,C] * [N,C]       per-sample channel weights over all pixels
//   [N,H,W,C] * [C]         shared channel weights
//   [N,H,W,C] * [N,H,W,1]   per-pixel weight over all channels
// Either argument order is accepted; rank-2/rank-2 also multiplies plain.
template <typename T>
Var hadamard(Tape<T>& tape, Var a, Var b) {
  enum class Mode { equal, sample_channel, channel, pixel };
  const Shape& as = tape.value(a).shape();
  const Shape& bs = tape.value(b).shape();

  Var big = a, small = b;
  Mode mode;
  auto classify = [](const Shape& big_s, const Shape& small_s,
                     Mode& out) -> bool {
    if (big_s.size() != 4) return false;
    const std::size_t N = big_s[0], C = big_s[3];
    if (small_s == Shape{N, C}) {
      out = Mode::sample_channel;
      return true;
    }
    if (small_s == Shape{C}) {
      out = Mode::channel;
      return true;
    }
    if (small_s == Shape{N, big_s[1], big_s[2], 1} && C != 1) {
      out = Mode::pixel;
      return true;
    }
    return false;
  };

  if (as == bs) {
    mode = Mode::equal;
  } else if (classify(as, bs, mode)) {
    // big = a, small = b
  } else if (classify(bs, as, mode)) {
    big = b;
    small = a;
  } else {
    throw ShapeError("hadamard: cannot broadcast " + shape_str(as) + " with " +
                     shape_str(bs));
  }

  const Tensor<T>& bv = tape.value(big);
  const Tensor<T>& sv = tape.value(small);
  Tensor<T> out(bv.shape());

  const std::size_t N = bv.rank() == 4 ? bv.dim(0) : 0;
  const std::size_t HW =
      bv.rank() == 4 ? bv.dim(1) * bv.dim(2) : 0;
  const std::size_t C = bv.rank() == 4 ? bv.dim(3) : 0;

  switch (mode) {
    case Mode::equal:
      for (std::size_t i = 0; i < out.numel(); ++i) out[i] = bv[i] * sv[i];
      break;
    case Mode::sample_channel:
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t p = 0; p < HW; ++p)
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t i = (n * HW + p) * C + c;
            out[i] = bv[i] * sv[n * C + c];
          }
      break;
    case Mode::channel:
      for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = bv[i] * sv[i % C];
      break;
    case Mode::pixel:
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t p = 0; p < HW; ++p) {
          const T w = sv[n * HW + p];
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t i = (n * HW + p) * C + c;
            out[i] = bv[i] * w;
          }
        }
      break;
  }

  return tape.push(
      "hadamard", {a, b}, std::move(out),
      [big, small, mode, N, HW, C](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& bv = t.value(big);
        const Tensor<T>& sv = t.value(small);
        Tensor<T> gb(bv.shape());
        Tensor<T> gs(sv.shape());
        switch (mode) {
          case Mode::equal:
            for (std::size_t i = 0; i < g.numel(); ++i) {
              gb[i] = g[i] * sv[i];
              gs[i] = g[i] * bv[i];
            }
            break;
          case Mode::sample_channel:
            for (std::size_t n = 0; n < N; ++n)
              for (std::size_t p = 0; p < HW; ++p)
                for (std::size_t c = 0; c < C; ++c) {
                  const std::size_t i = (n * HW + p) * C + c;
                  gb[i] = g[i] * sv[n * C + c];
                  gs[n * C + c] += g[i] * bv[i];
                }
            break;
          case Mode::channel:
            for (std::size_t i = 0; i < g.numel(); ++i) {
              gb[i] = g[i] * sv[i % C];
              gs[i % C] += g[i] * bv[i];
            }
            break;
          case Mode::pixel:
            for (std::size_t n = 0; n < N; ++n)
              for (std::size_t p = 0; p < HW; ++p) {
                const T w = sv[n * HW + p];
                T acc = 0;
                for (std::size_t c = 0; c < C; ++c) {
                  const std::size_t i = (n * HW + p) * C + c;
                  gb[i] = g[i] * w;
                  acc += g[i] * bv[i];
                }
                gs[n * HW + p] = acc;
              }
            break;
        }
        t.accumulate_grad(big, gb);
        t.accumulate_grad(small, gs);
      });
}

// ---------------------------------------------------------------------------
// Dense layer
// ---------------------------------------------------------------------------

// y = x w + b with x:[N,D], w:[D,K], b:[K].
template <typename T>
Var dense(Tape<T>& tape, Var x, Var w, Var b) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(w);
  const Tensor<T>& bv = tape.value(b);
  detail::require_rank(xv.shape(), 2, "dense input");
  detail::require_rank(wv.shape(), 2, "dense weight");
  detail::require_rank(bv.shape(), 1, "dense bias");
  const std::size_t N = xv.dim(0), D = xv.dim(1), K = wv.dim(1);
  detail::require(wv.dim(0) == D, "dense: input " + shape_str(xv.shape()) +
                                      " does not match weight " +
                                      shape_str(wv.shape()));
  detail::require(bv.dim(0) == K, "dense: bias " + shape_str(bv.shape()) +
                                      " does not match weight " +
                                      shape_str(wv.shape()));
  Tensor<T> out({N, K});
  {
    detail::CMapRM<T> X(xv.data(), N, D);
    detail::CMapRM<T> W(wv.data(), D, K);
    detail::MapRM<T> Y(out.data(), N, K);
    Y.noalias() = X * W;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t k = 0; k < K; ++k) out[n * K + k] += bv[k];
  }
  return tape.push("dense", {x, w, b}, std::move(out),
                   [x, w, b, N, D, K](Tape<T>& t, const Tensor<T>& g) {
                     const Tensor<T>& xv = t.value(x);
                     const Tensor<T>& wv = t.value(w);
                     detail::CMapRM<T> X(xv.data(), N, D);
                     detail::CMapRM<T> W(wv.data(), D, K);
                     detail::CMapRM<T> G(g.data(), N, K);
                     Tensor<T> gx({N, D});
                     Tensor<T> gw({D, K});
                     Tensor<T> gb({K});
                     detail::MapRM<T>(gx.data(), N, D).noalias() =
                         G * W.transpose();
                     detail::MapRM<T>(gw.data(), D, K).noalias() =
                         X.transpose() * G;
                     for (std::size_t n = 0; n < N; ++n)
                       for (std::size_t k = 0; k < K; ++k)
                         gb[k] += g[n * K + k];
                     t.accumulate_grad(x, gx);
                     t.accumulate_grad(w, gw);
                     t.accumulate_grad(b, gb);
                   });
}

// ---------------------------------------------------------------------------
// Convolution and pooling
// ---------------------------------------------------------------------------

// 2-D convolution, NHWC input, kernel [kh, kw, Cin, Cout], bias [Cout].
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var kernel, Var bias, std::size_t stride,
           Padding padding) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& kv = tape.value(kernel);
  const Tensor<T>& bv = tape.value(bias);
  detail::require_rank(xv.shape(), 4, "conv2d input");
  detail::require_rank(kv.shape(), 4, "conv2d kernel");
  detail::require_rank(bv.shape(), 1, "conv2d bias");
  detail::require(stride >= 1, "conv2d: stride must be >= 1");
  const std::size_t N = xv.dim(0), H = xv.dim(1), W = xv.dim(2),
                    Cin = xv.dim(3);
  const std::size_t kh = kv.dim(0), kw = kv.dim(1), Cout = kv.dim(3);
  detail::require(kh % 2 == 1 && kw % 2 == 1,
                  "conv2d: kernel dims must be odd, got " +
                      shape_str(kv.shape()));
  detail::require(kv.dim(2) == Cin,
                  "conv2d: input " + shape_str(xv.shape()) +
                      " has " + std::to_string(Cin) +
                      " channels but kernel " + shape_str(kv.shape()) +
                      " expects " + std::to_string(kv.dim(2)));
  detail::require(bv.dim(0) == Cout, "conv2d: bias " + shape_str(bv.shape()) +
                                         " does not match kernel " +
                                         shape_str(kv.shape()));
  if (padding == Padding::valid)
    detail::require(H >= kh && W >= kw,
                    "conv2d: input " + shape_str(xv.shape()) +
                        " smaller than kernel " + shape_str(kv.shape()) +
                        " with valid padding");

  const detail::AxisPlan hp = detail::conv_axis(H, kh, stride, padding);
  const detail::AxisPlan wp = detail::conv_axis(W, kw, stride, padding);
  const std::size_t P = N * hp.out * wp.out;
  const std::size_t K = kh * kw * Cin;

  Tensor<T> cols = detail::im2col(xv, kh, kw, stride, hp, wp);
  Tensor<T> out({N, hp.out, wp.out, Cout});
  {
    detail::CMapRM<T> Cm(cols.data(), P, K);
    detail::CMapRM<T> Km(kv.data(), K, Cout);
    detail::MapRM<T> Om(out.data(), P, Cout);
    Om.noalias() = Cm * Km;
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t c = 0; c < Cout; ++c) out[p * Cout + c] += bv[c];
  }

  return tape.push(
      "conv2d", {x, kernel, bias}, std::move(out),
      [x, kernel, bias, stride, hp, wp, kh, kw, P, K, Cout](
          Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& xv = t.value(x);
        const Tensor<T>& kv = t.value(kernel);
        Tensor<T> cols = detail::im2col(xv, kh, kw, stride, hp, wp);
        detail::CMapRM<T> Cm(cols.data(), P, K);
        detail::CMapRM<T> Km(kv.data(), K, Cout);
        detail::CMapRM<T> Gm(g.data(), P, Cout);

        Tensor<T> gk(kv.shape());
        detail::MapRM<T>(gk.data(), K, Cout).noalias() = Cm.transpose() * Gm;

        Tensor<T> gb({Cout});
        for (std::size_t p = 0; p < P; ++p)
          for (std::size_t c = 0; c < Cout; ++c) gb[c] += g[p * Cout + c];

        Tensor<T> gcols({P, K});
        detail::MapRM<T>(gcols.data(), P, K).noalias() = Gm * Km.transpose();
        Tensor<T> gx(xv.shape());
        detail::col2im_add(gcols, gx, kh, kw, stride, hp, wp);

        t.accumulate_grad(x, gx);
        t.accumulate_grad(kernel, gk);
        t.accumulate_grad(bias, gb);
      });
}

// 2x2 max pool, stride 2. Requires even spatial dims. Ties go to the
// first maximum in row-major window order.
template <typename T>
Var maxpool2(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  detail::require_rank(xv.shape(), 4, "maxpool2");
  const std::size_t N = xv.dim(0), H = xv.dim(1), W = xv.dim(2),
                    C = xv.dim(3);
  detail::require(H % 2 == 0 && W % 2 == 0,
                  "maxpool2: spatial dims must be even, got " +
                      shape_str(xv.shape()));
  const std::size_t Ho = H / 2, Wo = W / 2;
  Tensor<T> out({N, Ho, Wo, C});
  std::vector<std::size_t> argmax(out.numel());
  std::size_t o = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t oh = 0; oh < Ho; ++oh)
      for (std::size_t ow = 0; ow < Wo; ++ow)
        for (std::size_t c = 0; c < C; ++c, ++o) {
          std::size_t best = ((n * H + 2 * oh) * W + 2 * ow) * C + c;
          T bv = xv[best];
          const std::size_t cand[3] = {
              ((n * H + 2 * oh) * W + 2 * ow + 1) * C + c,
              ((n * H + 2 * oh + 1) * W + 2 * ow) * C + c,
              ((n * H + 2 * oh + 1) * W + 2 * ow + 1) * C + c};
          for (std::size_t idx : cand)
            if (xv[idx] > bv) {
              bv = xv[idx];
              best = idx;
            }
          out[o] = bv;
          argmax[o] = best;
        }
  return tape.push("maxpool2", {x}, std::move(out),
                   [x, argmax = std::move(argmax)](Tape<T>& t,
                                                   const Tensor<T>& g) {
                     Tensor<T> gx(t.value(x).shape());
                     for (std::size_t o = 0; o < g.numel(); ++o)
                       gx[argmax[o]] += g[o];
                     t.accumulate_grad(x, gx);
                   });
}

// Global average pool: [N,H,W,C] -> [N,C].
template <typename T>
Var global_avg_pool(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  detail::require_rank(xv.shape(), 4, "global_avg_pool");
  const std::size_t N = xv.dim(0), HW = xv.dim(1) * xv.dim(2), C = xv.dim(3);
  Tensor<T> out({N, C});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t p = 0; p < HW; ++p)
      for (std::size_t c = 0; c < C; ++c)
        out[n * C + c] += xv[(n * HW + p) * C + c];
  const T inv = T(1) / static_cast<T>(HW);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= inv;
  return tape.push("global_avg_pool", {x}, std::move(out),
                   [x, N, HW, C, inv](Tape<T>& t, const Tensor<T>& g) {
                     Tensor<T> gx(t.value(x).shape());
                     for (std::size_t n = 0; n < N; ++n)
                       for (std::size_t p = 0; p < HW; ++p)
                         for (std::size_t c = 0; c < C; ++c)
                           gx[(n * HW + p) * C + c] = g[n * C + c] * inv;
                     t.accumulate_grad(x, gx);
                   });
}

// Global max pool: [N,H,W,C] -> [N,C]. With literal_scale the maximum is
// divided by H*W; ties keep the first maximum in row-major scan order.
template <typename T>
Var global_max_pool(Tape<T>& tape, Var x, bool literal_scale) {
  const Tensor<T>& xv = tape.value(x);
  detail::require_rank(xv.shape(), 4, "global_max_pool");
  const std::size_t N = xv.dim(0), HW = xv.dim(1) * xv.dim(2), C = xv.dim(3);
  const T f = literal_scale ? T(1) / static_cast<T>(HW) : T(1);
  Tensor<T> out({N, C});
  std::vector<std::size_t> argmax(out.numel());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      std::size_t best = (n * HW) * C + c;
      T bv = xv[best];
      for (std::size_t p = 1; p < HW; ++p) {
        const std::size_t idx = (n * HW + p) * C + c;
        if (xv[idx] > bv) {
          bv = xv[idx];
          best = idx;
        }
      }
      out[n * C + c] = bv * f;
      argmax[n * C + c] = best;
    }
  return tape.push("global_max_pool", {x}, std::move(out),
                   [x, f, argmax = std::move(argmax)](Tape<T>& t,
                                                      const Tensor<T>& g) {
                     Tensor<T> gx(t.value(x).shape());
                     for (std::size_t o = 0; o < g.numel(); ++o)
                       gx[argmax[o]] += g[o] * f;
                     t.accumulate_grad(x, gx);
                   });
}

// ---------------------------------------------------------------------------
// Channel reductions and concat (spatial attention plumbing)
// ---------------------------------------------------------------------------

// Mean over channels: [N,H,W,C] -> [N,H,W,1].
template <typename T>
Var mean_channels(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  detail::require_rank(xv.shape(), 4, "mean_channels");
  const std::size_t NP = xv.dim(0) * xv.dim(1) * xv.dim(2), C = xv.dim(3);
  Tensor<T> out({xv.dim(0), xv.dim(1), xv.dim(2), 1});
  const T inv = T(1) / static_cast<T>(C);
  for (std::size_t p = 0; p < NP; ++p) {
    T s = 0;
    for (std::size_t c = 0; c < C; ++c) s += xv[p * C + c];
    out[p] = s * inv;
  }
  return tape.push("mean_channels", {x}, std::move(out),
                   [x, NP, C, inv](Tape<T>& t, const Tensor<T>& g) {
                     Tensor<T> gx(t.value(x).shape());
                     for (std::size_t p = 0; p < NP; ++p)
                       for (std::size_t c = 0; c < C; ++c)
                         gx[p * C + c] = g[p] * inv;
                     t.accumulate_grad(x, gx);
                   });
}

// Max over channels: [N,H,W,C] -> [N,H,W,1]. Ties keep the lowest channel.
template <typename T>
Var max_channels(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  detail::require_rank(xv.shape(), 4, "max_channels");
  const std::size_t NP = xv.dim(0) * xv.dim(1) * xv.dim(2), C = xv.dim(3);
  Tensor<T> out({xv.dim(0), xv.dim(1), xv.dim(2), 1});
  std::vector<std::size_t> argmax(NP);
  for (std::size_t p = 0; p < NP; ++p) {
    std::size_t best = p * C;
    T bv = xv[best];
    for (std::size_t c = 1; c < C; ++c)
      if (xv[p * C + c] > bv) {
        bv = xv[p * C + c];
        best = p * C + c;
      }
    out[p] = bv;
    argmax[p] = best;
  }
  return tape.push("max_channels", {x}, std::move(out),
                   [x, argmax = std::move(argmax)](Tape<T>& t,
                                                   const Tensor<T>& g) {
                     Tensor<T> gx(t.value(x).shape());
                     for (std::size_t p = 0; p < g.numel(); ++p)
                       gx[argmax[p]] += g[p];
                     t.accumulate_grad(x, gx);
                   });
}

// Concatenate along the channel axis: [N,H,W,Ca] + [N,H,W,Cb].
template <typename T>
Var concat_channels(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  detail::require_rank(av.shape(), 4, "concat_channels");
  detail::require_rank(bv.shape(), 4, "concat_channels");
  detail::require(av.dim(0) == bv.dim(0) && av.dim(1) == bv.dim(1) &&
                      av.dim(2) == bv.dim(2),
                  "concat_channels: leading dims differ, " +
                      shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  const std::size_t NP = av.dim(0) * av.dim(1) * av.dim(2);
  const std::size_t Ca = av.dim(3), Cb = bv.dim(3);
  Tensor<T> out({av.dim(0), av.dim(1), av.dim(2), Ca + Cb});
  for (std::size_t p = 0; p < NP; ++p) {
    std::copy(av.data() + p * Ca, av.data() + (p + 1) * Ca,
              out.data() + p * (Ca + Cb));
    std::copy(bv.data() + p * Cb, bv.data() + (p + 1) * Cb,
              out.data() + p * (Ca + Cb) + Ca);
  }
  return tape.push("concat_channels", {a, b}, std::move(out),
                   [a, b, NP, Ca, Cb](Tape<T>& t, const Tensor<T>& g) {
                     Tensor<T> ga(t.value(a).shape());
                     Tensor<T> gb(t.value(b).shape());
                     for (std::size_t p = 0; p < NP; ++p) {
                       std::copy(g.data() + p * (Ca + Cb),
                                 g.data() + p * (Ca + Cb) + Ca,
                                 ga.data() + p * Ca);
                       std::copy(g.data() + p * (Ca + Cb) + Ca,
                                 g.data() + (p + 1) * (Ca + Cb),
                                 gb.data() + p * Cb);
                     }
                     t.accumulate_grad(a, ga);
                     t.accumulate_grad(b, gb);
                   });
}

// ---------------------------------------------------------------------------
// Bilinear pooling pieces
// ---------------------------------------------------------------------------

// Pairwise channel statistics: for inputs [N,H,W,C] computes per sample
// B_n = (1/(H*W)) sum_p a[n,p,:] (x) b[n,p,:], flattened to [N, C*C].
template <typename T>
Var bilinear_outer_mean(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  detail::require_rank(av.shape(), 4, "bilinear_outer_mean");
  check_same_shape(av, bv, "bilinear_outer_mean");
  const std::size_t N = av.dim(0), HW = av.dim(1) * av.dim(2), C = av.dim(3);
  const T inv = T(1) / static_cast<T>(HW);
  Tensor<T> out({N, C * C});
  for (std::size_t n = 0; n < N; ++n) {
    detail::CMapRM<T> A(av.data() + n * HW * C, HW, C);
    detail::CMapRM<T> B(bv.data() + n * HW * C, HW, C);
    detail::MapRM<T> O(out.data() + n * C * C, C, C);
    O.noalias() = A.transpose() * B * inv;
  }
  return tape.push(
      "bilinear_outer_mean", {a, b}, std::move(out),
      [a, b, N, HW, C, inv](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& av = t.value(a);
        const Tensor<T>& bv = t.value(b);
        Tensor<T> ga(av.shape());
        Tensor<T> gb(bv.shape());
        for (std::size_t n = 0; n < N; ++n) {
          detail::CMapRM<T> A(av.data() + n * HW * C, HW, C);
          detail::CMapRM<T> B(bv.data() + n * HW * C, HW, C);
          detail::CMapRM<T> G(g.data() + n * C * C, C, C);
          detail::MapRM<T>(ga.data() + n * HW * C, HW, C).noalias() =
              B * G.transpose() * inv;
          detail::MapRM<T>(gb.data() + n * HW * C, HW, C).noalias() =
              A * G * inv;
        }
        t.accumulate_grad(a, ga);
        t.accumulate_grad(b, gb);
      });
}

// Elementwise signed square root: sign(x) sqrt(|x|). The derivative is
// clamped near zero to keep gradients finite.
template <typename T>
Var signed_sqrt(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const T r = std::sqrt(std::abs(xv[i]));
    out[i] = xv[i] < T(0) ? -r : r;
  }
  Tensor<T> saved = out;
  return tape.push("signed_sqrt", {x}, std::move(out),
                   [x, saved = std::move(saved)](Tape<T>& t,
                                                 const Tensor<T>& g) {
                     Tensor<T> gx(g.shape());
                     for (std::size_t i = 0; i < g.numel(); ++i) {
                       const T denom =
                           std::max(std::abs(saved[i]), T(1e-6)) * T(2);
                       gx[i] = g[i] / denom;
                     }
                     t.accumulate_grad(x, gx);
                   });
}

// Rowwise L2 normalization of a [N, D] tensor. Rows with norm below 1e-12
// pass through as zeros and are counted in the log.
template <typename T>
Var l2_normalize_rows(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  detail::require_rank(xv.shape(), 2, "l2_normalize_rows");
  const std::size_t N = xv.dim(0), D = xv.dim(1);
  Tensor<T> out(xv.shape());
  std::vector<T> norms(N);
  std::size_t degenerate = 0;
  for (std::size_t n = 0; n < N; ++n) {
    T s = 0;
    for (std::size_t d = 0; d < D; ++d) s += xv[n * D + d] * xv[n * D + d];
    const T r = std::sqrt(s);
    norms[n] = r;
    if (r < T(1e-12)) {
      ++degenerate;
      continue;  // row stays zero
    }
    for (std::size_t d = 0; d < D; ++d) out[n * D + d] = xv[n * D + d] / r;
  }
  if (degenerate > 0)
    log_warn("l2_normalize_rows: " + std::to_string(degenerate) +
             " zero row(s) passed through unnormalized");
  return tape.push(
      "l2_normalize_rows", {x}, std::move(out),
      [x, N, D, norms = std::move(norms)](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& xv = t.value(x);
        Tensor<T> gx(xv.shape());
        for (std::size_t n = 0; n < N; ++n) {
          const T r = norms[n];
          if (r < T(1e-12)) continue;
          T dot = 0;
          for (std::size_t d = 0; d < D; ++d)
            dot += g[n * D + d] * xv[n * D + d];
          const T r3 = r * r * r;
          for (std::size_t d = 0; d < D; ++d)
            gx[n * D + d] = g[n * D + d] / r - xv[n * D + d] * dot / r3;
        }
        t.accumulate_grad(x, gx);
      });
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

// Mean cross-entropy of logits [N,K] against integer labels. Uses the
// log-sum-exp form so large logits stay finite.
template <typename T>
Var cross_entropy(Tape<T>& tape, Var logits, const std::vector<int>& labels) {
  const Tensor<T>& lv = tape.value(logits);
  detail::require_rank(lv.shape(), 2, "cross_entropy");
  const std::size_t N = lv.dim(0), K = lv.dim(1);
  detail::require(labels.size() == N,
                  "cross_entropy: " + std::to_string(labels.size()) +
                      " labels for " + std::to_string(N) + " rows");
  for (std::size_t n = 0; n < N; ++n)
    detail::require(labels[n] >= 0 && labels[n] < static_cast<int>(K),
                    "cross_entropy: label " + std::to_string(labels[n]) +
                        " out of range [0," + std::to_string(K) + ")");
  Tensor<T> probs({N, K});
  T loss = 0;
  for (std::size_t n = 0; n < N; ++n) {
    const T* row = lv.data() + n * K;
    T* prow = probs.data() + n * K;
    T mx = row[0];
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    T denom = 0;
    for (std::size_t k = 0; k < K; ++k) {
      prow[k] = std::exp(row[k] - mx);
      denom += prow[k];
    }
    for (std::size_t k = 0; k < K; ++k) prow[k] /= denom;
    loss -= (row[labels[n]] - mx - std::log(denom));
  }
  loss /= static_cast<T>(N);
  return tape.push(
      "cross_entropy", {logits}, Tensor<T>::scalar(loss),
      [logits, labels, N, K, probs = std::move(probs)](Tape<T>& t,
                                                       const Tensor<T>& g) {
        // d loss / d logit = (softmax - onehot) / N
        Tensor<T> gx({N, K});
        const T inv = g[0] / static_cast<T>(N);
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t k = 0; k < K; ++k) {
            T v = probs[n * K + k];
            if (static_cast<int>(k) == labels[n]) v -= T(1);
            gx[n * K + k] = v * inv;
          }
        t.accumulate_grad(logits, gx);
      });
}

}  // namespace csab
