#pragma once

// Nested-loop reference implementations used to cross-check the library's
// fast paths. Everything here is the naive formulation, written once and
// left alone; keep it free of Eigen and of the code under test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "csab/model.hpp"
#include "csab/rng.hpp"
#include "csab/tensor.hpp"

namespace oracle {

using csab::ModelParams;
using csab::ModelSpec;
using csab::Shape;
using csab::Tensor;

inline Tensor<double> random_tensor(csab::Rng& rng, Shape shape,
                                    double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = a.same_shape(b) ? 0.0
                             : std::numeric_limits<double>::infinity();
  if (!a.same_shape(b)) return m;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& k,
                             const Tensor<double>& b, std::size_t stride,
                             bool same) {
  const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), Cin = x.dim(3);
  const std::size_t kh = k.dim(0), kw = k.dim(1), Cout = k.dim(3);
  std::size_t Ho, Wo;
  std::ptrdiff_t ph, pw;
  if (same) {
    Ho = (H + stride - 1) / stride;
    Wo = (W + stride - 1) / stride;
    std::ptrdiff_t th = static_cast<std::ptrdiff_t>((Ho - 1) * stride + kh) -
                        static_cast<std::ptrdiff_t>(H);
    std::ptrdiff_t tw = static_cast<std::ptrdiff_t>((Wo - 1) * stride + kw) -
                        static_cast<std::ptrdiff_t>(W);
    if (th < 0) th = 0;
    if (tw < 0) tw = 0;
    ph = th / 2;
    pw = tw / 2;
  } else {
    Ho = (H - kh) / stride + 1;
    Wo = (W - kw) / stride + 1;
    ph = pw = 0;
  }
  Tensor<double> out({N, Ho, Wo, Cout});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t oh = 0; oh < Ho; ++oh)
      for (std::size_t ow = 0; ow < Wo; ++ow)
        for (std::size_t co = 0; co < Cout; ++co) {
          double acc = b[co];
          for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j)
              for (std::size_t ci = 0; ci < Cin; ++ci) {
                const std::ptrdiff_t ih =
                    static_cast<std::ptrdiff_t>(oh * stride + i) - ph;
                const std::ptrdiff_t iw =
                    static_cast<std::ptrdiff_t>(ow * stride + j) - pw;
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H) || iw < 0 ||
                    iw >= static_cast<std::ptrdiff_t>(W))
                  continue;
                acc += x.at4(n, static_cast<std::size_t>(ih),
                             static_cast<std::size_t>(iw), ci) *
                       k[((i * kw + j) * Cin + ci) * Cout + co];
              }
          out.at4(n, oh, ow, co) = acc;
        }
  return out;
}

inline Tensor<double> maxpool2(const Tensor<double>& x) {
  const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  Tensor<double> out({N, H / 2, W / 2, C});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t oh = 0; oh < H / 2; ++oh)
      for (std::size_t ow = 0; ow < W / 2; ++ow)
        for (std::size_t c = 0; c < C; ++c) {
          double m = x.at4(n, 2 * oh, 2 * ow, c);
          m = std::max(m, static_cast<double>(x.at4(n, 2 * oh, 2 * ow + 1, c)));
          m = std::max(m, static_cast<double>(x.at4(n, 2 * oh + 1, 2 * ow, c)));
          m = std::max(m,
                       static_cast<double>(x.at4(n, 2 * oh + 1, 2 * ow + 1, c)));
          out.at4(n, oh, ow, c) = m;
        }
  return out;
}

inline Tensor<double> gap(const Tensor<double>& x) {
  const std::size_t N = x.dim(0), HW = x.dim(1) * x.dim(2), C = x.dim(3);
  Tensor<double> out({N, C});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0;
      for (std::size_t p = 0; p < HW; ++p) s += x[(n * HW + p) * C + c];
      out[n * C + c] = s / static_cast<double>(HW);
    }
  return out;
}

inline Tensor<double> gmp(const Tensor<double>& x, bool literal_scale) {
  const std::size_t N = x.dim(0), HW = x.dim(1) * x.dim(2), C = x.dim(3);
  Tensor<double> out({N, C});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      double m = x[(n * HW) * C + c];
      for (std::size_t p = 1; p < HW; ++p)
        m = std::max(m, static_cast<double>(x[(n * HW + p) * C + c]));
      out[n * C + c] = literal_scale ? m / static_cast<double>(HW) : m;
    }
  return out;
}

inline Tensor<double> dense(const Tensor<double>& x, const Tensor<double>& w,
                            const Tensor<double>& b) {
  const std::size_t N = x.dim(0), D = x.dim(1), K = w.dim(1);
  Tensor<double> out({N, K});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < K; ++k) {
      double acc = b[k];
      for (std::size_t d = 0; d < D; ++d) acc += x[n * D + d] * w[d * K + k];
      out[n * K + k] = acc;
    }
  return out;
}

inline Tensor<double> relu(const Tensor<double>& x) {
  Tensor<double> out = x;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::max(out[i], 0.0);
  return out;
}

inline Tensor<double> sigmoid(const Tensor<double>& x) {
  Tensor<double> out = x;
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  return out;
}

inline Tensor<double> mean_channels(const Tensor<double>& x) {
  const std::size_t NP = x.dim(0) * x.dim(1) * x.dim(2), C = x.dim(3);
  Tensor<double> out({x.dim(0), x.dim(1), x.dim(2), 1});
  for (std::size_t p = 0; p < NP; ++p) {
    double s = 0;
    for (std::size_t c = 0; c < C; ++c) s += x[p * C + c];
    out[p] = s / static_cast<double>(C);
  }
  return out;
}

inline Tensor<double> max_channels(const Tensor<double>& x) {
  const std::size_t NP = x.dim(0) * x.dim(1) * x.dim(2), C = x.dim(3);
  Tensor<double> out({x.dim(0), x.dim(1), x.dim(2), 1});
  for (std::size_t p = 0; p < NP; ++p) {
    double m = x[p * C];
    for (std::size_t c = 1; c < C; ++c)
      m = std::max(m, static_cast<double>(x[p * C + c]));
    out[p] = m;
  }
  return out;
}

inline Tensor<double> concat2(const Tensor<double>& a,
                              const Tensor<double>& b) {
  const std::size_t NP = a.dim(0) * a.dim(1) * a.dim(2);
  const std::size_t Ca = a.dim(3), Cb = b.dim(3);
  Tensor<double> out({a.dim(0), a.dim(1), a.dim(2), Ca + Cb});
  for (std::size_t p = 0; p < NP; ++p) {
    for (std::size_t c = 0; c < Ca; ++c)
      out[p * (Ca + Cb) + c] = a[p * Ca + c];
    for (std::size_t c = 0; c < Cb; ++c)
      out[p * (Ca + Cb) + Ca + c] = b[p * Cb + c];
  }
  return out;
}

struct Attention {
  Tensor<double> mask;
  Tensor<double> attended;
};

inline Attention channel_attention(const Tensor<double>& y,
                                   const Tensor<double>& w1,
                                   const Tensor<double>& bias,
                                   bool literal_scale) {
  const std::size_t N = y.dim(0), HW = y.dim(1) * y.dim(2), C = y.dim(3);
  const Tensor<double> g = gap(y);
  const Tensor<double> f = gmp(y, literal_scale);
  Tensor<double> a(y.shape());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t p = 0; p < HW; ++p)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t i = (n * HW + p) * C + c;
        a[i] = y[i] * g[n * C + c] + y[i] * f[n * C + c];
      }
  const Tensor<double> mask = sigmoid(dense(gap(a), w1, bias));
  Tensor<double> att(y.shape());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t p = 0; p < HW; ++p)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t i = (n * HW + p) * C + c;
        att[i] = y[i] * mask[n * C + c];
      }
  return {mask, att};
}

inline Attention spatial_attention(const Tensor<double>& y,
                                   const Tensor<double>& k7,
                                   const Tensor<double>& bias) {
  const std::size_t N = y.dim(0), HW = y.dim(1) * y.dim(2), C = y.dim(3);
  const Tensor<double> stack = concat2(mean_channels(y), max_channels(y));
  const Tensor<double> mask = sigmoid(conv2d(stack, k7, bias, 1, true));
  Tensor<double> att(y.shape());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t p = 0; p < HW; ++p)
      for (std::size_t c = 0; c < C; ++c)
        att[(n * HW + p) * C + c] = y[(n * HW + p) * C + c] * mask[n * HW + p];
  return {mask, att};
}

inline Tensor<double> bilinear_pool(const Tensor<double>& yc,
                                    const Tensor<double>& ys) {
  const std::size_t N = yc.dim(0), HW = yc.dim(1) * yc.dim(2), C = yc.dim(3);
  Tensor<double> out({N, C * C});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c1 = 0; c1 < C; ++c1)
      for (std::size_t c2 = 0; c2 < C; ++c2) {
        double s = 0;
        for (std::size_t p = 0; p < HW; ++p)
          s += yc[(n * HW + p) * C + c1] * ys[(n * HW + p) * C + c2];
        out[(n * C + c1) * C + c2] = s / static_cast<double>(HW);
      }
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double r = std::sqrt(std::abs(out[i]));
    out[i] = out[i] < 0 ? -r : r;
  }
  for (std::size_t n = 0; n < N; ++n) {
    double s = 0;
    for (std::size_t d = 0; d < C * C; ++d)
      s += out[n * C * C + d] * out[n * C * C + d];
    const double r = std::sqrt(s);
    if (r < 1e-12) {
      for (std::size_t d = 0; d < C * C; ++d) out[n * C * C + d] = 0.0;
      continue;
    }
    for (std::size_t d = 0; d < C * C; ++d) out[n * C * C + d] /= r;
  }
  return out;
}

inline Tensor<double> softmax_rows(const Tensor<double>& x) {
  const std::size_t N = x.dim(0), K = x.dim(1);
  Tensor<double> out(x.shape());
  for (std::size_t n = 0; n < N; ++n) {
    double mx = x[n * K];
    for (std::size_t k = 1; k < K; ++k)
      mx = std::max(mx, static_cast<double>(x[n * K + k]));
    double denom = 0;
    for (std::size_t k = 0; k < K; ++k) {
      out[n * K + k] = std::exp(x[n * K + k] - mx);
      denom += out[n * K + k];
    }
    for (std::size_t k = 0; k < K; ++k) out[n * K + k] /= denom;
  }
  return out;
}

inline double cross_entropy(const Tensor<double>& logits,
                            const std::vector<int>& labels) {
  const Tensor<double> p = softmax_rows(logits);
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  double loss = 0;
  for (std::size_t n = 0; n < N; ++n)
    loss -= std::log(p[n * K + static_cast<std::size_t>(labels[n])]);
  return loss / static_cast<double>(N);
}

// Eval-mode forward of the whole model (no dropout), built purely from the
// loop references above.
inline Tensor<double> model_forward(const ModelSpec& spec,
                                    const ModelParams<double>& params,
                                    const Tensor<double>& batch) {
  auto get = [&](const std::string& name) -> const Tensor<double>& {
    return params.find(name)->value;
  };
  Tensor<double> x = batch;
  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    for (std::size_t j = 0; j < spec.blocks[i].convs; ++j) {
      const std::string base =
          "block" + std::to_string(i) + ".conv" + std::to_string(j);
      x = relu(conv2d(x, get(base + ".kernel"), get(base + ".bias"), 1, true));
    }
    x = maxpool2(x);
  }
  if (spec.head == csab::HeadKind::csab) {
    const Attention ca = channel_attention(
        x, get("head.ca.w1"), get("head.ca.bias"), spec.gmp_literal_scale);
    const Attention sa =
        spatial_attention(x, get("head.sa.conv7"), get("head.sa.bias"));
    const Tensor<double> pooled = bilinear_pool(ca.attended, sa.attended);
    return dense(pooled, get("head.fc.weight"), get("head.fc.bias"));
  }
  return dense(gap(x), get("head.fc.weight"), get("head.fc.bias"));
}

}  // namespace oracle
