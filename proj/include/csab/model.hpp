#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "csab/ops.hpp"
#include "csab/rng.hpp"
#include "csab/tape.hpp"
#include "csab/tensor.hpp"

namespace csab {

enum class HeadKind { csab, plain };
enum class RunMode { train, eval };

inline const char* head_kind_name(HeadKind h) {
  return h == HeadKind::csab ? "csab" : "plain";
}

inline HeadKind parse_head_kind(const std::string& s) {
  if (s == "csab") return HeadKind::csab;
  if (s == "plain") return HeadKind::plain;
  throw UsageError("unknown head '" + s + "' (expected csab or plain)");
}

// One backbone stage: `convs` 3x3 same-padding conv+relu layers at width
// `channels`, followed by a 2x2 max pool.
struct BlockSpec {
  std::size_t convs;
  std::size_t channels;
  bool operator==(const BlockSpec&) const = default;
};

struct ModelSpec {
  std::size_t input_h = 32;
  std::size_t input_w = 32;
  std::size_t input_c = 3;
  std::vector<BlockSpec> blocks{{2, 8}, {2, 16}};
  HeadKind head = HeadKind::csab;
  std::size_t num_classes = 6;
  bool gmp_literal_scale = true;
  double dropout = 0.5;  // plain head, train mode only

  bool operator==(const ModelSpec&) const = default;

  std::size_t head_channels() const { return blocks.back().channels; }

  std::pair<std::size_t, std::size_t> feature_hw() const {
    std::size_t h = input_h, w = input_w;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      h /= 2;
      w /= 2;
    }
    return {h, w};
  }

  void validate() const {
    if (blocks.empty()) throw UsageError("model spec: no backbone blocks");
    for (const auto& b : blocks)
      if (b.convs < 1 || b.channels < 1)
        throw UsageError("model spec: each block needs >= 1 conv and channel");
    if (num_classes < 2) throw UsageError("model spec: num_classes must be >= 2");
    if (input_c < 1) throw UsageError("model spec: input channels must be >= 1");
    const std::size_t div = std::size_t{1} << blocks.size();
    if (input_h % div != 0 || input_w % div != 0 || input_h < div ||
        input_w < div)
      throw UsageError("model spec: input " + std::to_string(input_h) + "x" +
                       std::to_string(input_w) + " not divisible by 2^" +
                       std::to_string(blocks.size()) + " blocks");
    if (dropout < 0.0 || dropout >= 1.0)
      throw UsageError("model spec: dropout must be in [0,1)");
  }

  static ModelSpec tiny() { return ModelSpec{}; }

  static ModelSpec vgg16() {
    ModelSpec s;
    s.input_h = 224;
    s.input_w = 224;
    s.blocks = {{2, 64}, {2, 128}, {3, 256}, {3, 512}, {3, 512}};
    return s;
  }
};

// Canonical (name, shape) list for every trainable tensor of a spec.
// Backbone entries come first and are identical for both head kinds, so
// backbone weights transfer between csab and plain models.
inline std::vector<std::pair<std::string, Shape>> skeleton(
    const ModelSpec& spec) {
  spec.validate();
  std::vector<std::pair<std::string, Shape>> out;
  std::size_t cin = spec.input_c;
  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    const std::size_t ch = spec.blocks[i].channels;
    for (std::size_t j = 0; j < spec.blocks[i].convs; ++j) {
      const std::string base =
          "block" + std::to_string(i) + ".conv" + std::to_string(j);
      out.emplace_back(base + ".kernel", Shape{3, 3, cin, ch});
      out.emplace_back(base + ".bias", Shape{ch});
      cin = ch;
    }
  }
  const std::size_t C = spec.head_channels();
  const std::size_t K = spec.num_classes;
  if (spec.head == HeadKind::csab) {
    out.emplace_back("head.ca.w1", Shape{C, C});
    out.emplace_back("head.ca.bias", Shape{C});
    out.emplace_back("head.sa.conv7", Shape{7, 7, 2, 1});
    out.emplace_back("head.sa.bias", Shape{1});
    out.emplace_back("head.fc.weight", Shape{C * C, K});
    out.emplace_back("head.fc.bias", Shape{K});
  } else {
    out.emplace_back("head.fc.weight", Shape{C, K});
    out.emplace_back("head.fc.bias", Shape{K});
  }
  return out;
}

template <typename T>
struct ModelParams {
  std::vector<Parameter<T>> params;

  Parameter<T>* find(const std::string& name) {
    for (auto& p : params)
      if (p.name == name) return &p;
    return nullptr;
  }
  const Parameter<T>* find(const std::string& name) const {
    for (const auto& p : params)
      if (p.name == name) return &p;
    return nullptr;
  }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.params.reserve(params.size());
    for (const auto& p : params)
      out.params.emplace_back(p.name, p.value.template cast<U>());
    return out;
  }
};

// He-uniform fan-in draw: U(-limit, limit) with limit = sqrt(6 / fan_in).
// Conv kernels use kh*kw*Cin as fan-in, dense weights use the input dim;
// biases start at zero. Each tensor draws from a stream keyed by its name
// so shared backbone tensors initialize identically across head kinds.
template <typename T>
ModelParams<T> init_params(const ModelSpec& spec, std::uint64_t seed) {
  ModelParams<T> out;
  for (const auto& [name, shape] : skeleton(spec)) {
    Tensor<T> value(shape);
    const bool is_weight = shape.size() >= 2;
    if (is_weight) {
      std::size_t fan_in = 1;
      for (std::size_t d = 0; d + 1 < shape.size(); ++d) fan_in *= shape[d];
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
      Rng rng(hash_seed(seed, fnv1a64(name)));
      for (std::size_t i = 0; i < value.numel(); ++i)
        value[i] = static_cast<T>(rng.uniform(-limit, limit));
    }
    out.params.emplace_back(name, std::move(value));
  }
  return out;
}

// Checks params against the spec's skeleton; throws naming the first
// missing, extra, or mis-shaped parameter.
template <typename T>
void validate_params(const ModelSpec& spec, const ModelParams<T>& params) {
  const auto expect = skeleton(spec);
  for (const auto& [name, shape] : expect) {
    const Parameter<T>* p = params.find(name);
    if (!p) throw ShapeError("model params: missing parameter '" + name + "'");
    if (p->value.shape() != shape)
      throw ShapeError("model params: parameter '" + name + "' has shape " +
                       shape_str(p->value.shape()) + ", expected " +
                       shape_str(shape));
  }
  for (const auto& p : params.params) {
    bool known = false;
    for (const auto& [name, shape] : expect)
      if (name == p.name) {
        known = true;
        break;
      }
    if (!known)
      throw ShapeError("model params: unexpected parameter '" + p.name + "'");
  }
}

// ---------------------------------------------------------------------------
// CSAB head pieces
// ---------------------------------------------------------------------------

template <typename T>
struct AttentionOut {
  Var mask;
  Var attended;
};

// Channel attention: mask = sigmoid(W1 . GAP(g(Y).Y + f(Y).Y) + b),
// attended = mask (x) Y broadcast over spatial positions.
template <typename T>
AttentionOut<T> channel_attention(Tape<T>& tape, Var y, Var w1, Var bias,
                                  bool literal_scale) {
  const Tensor<T>& yv = tape.value(y);
  detail::require_rank(yv.shape(), 4, "channel_attention");
  const std::size_t C = yv.dim(3);
  const Tensor<T>& wv = tape.value(w1);
  detail::require(wv.shape() == Shape{C, C},
                  "channel_attention: W1 " + shape_str(wv.shape()) +
                      " does not match feature channels " +
                      std::to_string(C));
  Var g = global_avg_pool(tape, y);
  Var f = global_max_pool(tape, y, literal_scale);
  Var gy = hadamard(tape, y, g);
  Var fy = hadamard(tape, y, f);
  Var a = add(tape, gy, fy);
  Var pooled = global_avg_pool(tape, a);
  Var z = dense(tape, pooled, w1, bias);
  Var mask = sigmoid(tape, z);
  Var yc = hadamard(tape, y, mask);
  return {mask, yc};
}

// Spatial attention: per-pixel channel mean and max stacked to 2 channels,
// 7x7 same-padding conv, sigmoid; attended = mask (x) Y over channels.
template <typename T>
AttentionOut<T> spatial_attention(Tape<T>& tape, Var y, Var conv7, Var bias) {
  const Tensor<T>& kv = tape.value(conv7);
  detail::require(kv.shape() == Shape{7, 7, 2, 1},
                  "spatial_attention: conv kernel must be [7,7,2,1], got " +
                      shape_str(kv.shape()));
  Var mean = mean_channels(tape, y);
  Var mx = max_channels(tape, y);
  Var stack = concat_channels(tape, mean, mx);
  Var z = conv2d(tape, stack, conv7, bias, 1, Padding::same);
  Var mask = sigmoid(tape, z);
  Var ys = hadamard(tape, y, mask);
  return {mask, ys};
}

// Bilinear pooling of the two attended maps: position-averaged outer
// product, signed sqrt, rowwise L2 normalization -> [N, C*C].
template <typename T>
Var bilinear_pool(Tape<T>& tape, Var yc, Var ys) {
  Var b = bilinear_outer_mean(tape, yc, ys);
  Var s = signed_sqrt(tape, b);
  return l2_normalize_rows(tape, s);
}

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

template <typename T>
std::map<std::string, Var> bind_params(Tape<T>& tape, ModelParams<T>& params) {
  std::map<std::string, Var> vars;
  for (auto& p : params.params) vars[p.name] = tape.param(p);
  return vars;
}

// Runs the model on an already-bound batch Var and parameter Vars.
// Returns the logits node. Dropout (plain head, train mode) draws its mask
// from `dropout_rng`, which must be supplied in that configuration.
template <typename T>
Var model_forward(Tape<T>& tape, const ModelSpec& spec,
                  const std::map<std::string, Var>& vars, Var batch,
                  RunMode mode, Rng* dropout_rng = nullptr) {
  const Tensor<T>& bv = tape.value(batch);
  detail::require(bv.shape() == Shape{bv.dim(0), spec.input_h, spec.input_w,
                                      spec.input_c},
                  "model_forward: batch " + shape_str(bv.shape()) +
                      " does not match spec input " +
                      std::to_string(spec.input_h) + "x" +
                      std::to_string(spec.input_w) + "x" +
                      std::to_string(spec.input_c));
  auto var = [&](const std::string& name) -> Var {
    auto it = vars.find(name);
    if (it == vars.end())
      throw ShapeError("model_forward: parameter '" + name +
                       "' not bound on tape");
    return it->second;
  };

  Var x = batch;
  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    for (std::size_t j = 0; j < spec.blocks[i].convs; ++j) {
      const std::string base =
          "block" + std::to_string(i) + ".conv" + std::to_string(j);
      x = conv2d(tape, x, var(base + ".kernel"), var(base + ".bias"), 1,
                 Padding::same);
      x = relu(tape, x);
    }
    x = maxpool2(tape, x);
  }

  if (spec.head == HeadKind::csab) {
    auto ca = channel_attention(tape, x, var("head.ca.w1"),
                                var("head.ca.bias"), spec.gmp_literal_scale);
    auto sa =
        spatial_attention(tape, x, var("head.sa.conv7"), var("head.sa.bias"));
    Var pooled = bilinear_pool(tape, ca.attended, sa.attended);
    return dense(tape, pooled, var("head.fc.weight"), var("head.fc.bias"));
  }

  Var pooled = global_avg_pool(tape, x);
  if (mode == RunMode::train && spec.dropout > 0.0) {
    if (!dropout_rng)
      throw Error("model_forward: dropout requires an rng in train mode");
    const Tensor<T>& pv = tape.value(pooled);
    const T keep = static_cast<T>(1.0 - spec.dropout);
    Tensor<T> mask(pv.shape());
    for (std::size_t i = 0; i < mask.numel(); ++i)
      mask[i] = dropout_rng->bernoulli(static_cast<double>(keep))
                    ? T(1) / keep
                    : T(0);
    Var m = tape.leaf(std::move(mask), "dropout_mask");
    pooled = hadamard(tape, pooled, m);
  }
  return dense(tape, pooled, var("head.fc.weight"), var("head.fc.bias"));
}

// Convenience one-shot forward: binds params on a fresh tape, validates
// them against the spec, and returns the logits tensor by value.
template <typename T>
Tensor<T> forward_logits(const ModelSpec& spec, ModelParams<T>& params,
                         const Tensor<T>& batch, RunMode mode = RunMode::eval,
                         Rng* dropout_rng = nullptr) {
  validate_params(spec, params);
  Tape<T> tape;
  auto vars = bind_params(tape, params);
  Var b = tape.leaf(batch, "batch");
  Var logits = model_forward(tape, spec, vars, b, mode, dropout_rng);
  return tape.value(logits);
}

// Index of the largest logit; ties resolve to the first index.
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  std::vector<int> out(N);
  for (std::size_t n = 0; n < N; ++n) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k)
      if (logits[n * K + k] > logits[n * K + best]) best = k;
    out[n] = static_cast<int>(best);
  }
  return out;
}

}  // namespace csab
