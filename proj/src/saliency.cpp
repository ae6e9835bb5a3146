#include "csab/saliency.hpp"

#include <algorithm>
#include <cmath>

namespace csab {

Tensor<float> saliency_map(const Checkpoint& cp, const Tensor<float>& image,
                           int class_index) {
  if (class_index < 0 ||
      class_index >= static_cast<int>(cp.spec.num_classes))
    throw UsageError("saliency: class index " + std::to_string(class_index) +
                     " outside [0," + std::to_string(cp.spec.num_classes) +
                     ")");
  if (image.shape() != Shape{cp.spec.input_h, cp.spec.input_w,
                             cp.spec.input_c})
    throw ShapeError("saliency: image " + shape_str(image.shape()) +
                     " does not match model input " +
                     std::to_string(cp.spec.input_h) + "x" +
                     std::to_string(cp.spec.input_w) + "x" +
                     std::to_string(cp.spec.input_c));

  const std::size_t H = cp.spec.input_h, W = cp.spec.input_w,
                    C = cp.spec.input_c;
  ModelParams<float> params = cp.params;
  validate_params(cp.spec, params);
  Tape<float> tape;
  auto vars = bind_params(tape, params);
  Var batch = tape.leaf(image.reshaped({1, H, W, C}), "image");
  Var logits = model_forward(tape, cp.spec, vars, batch, RunMode::eval);
  Var score = select_scalar(tape, logits,
                            static_cast<std::size_t>(class_index));
  tape.backward(score);
  const Tensor<float> g = tape.grad(batch);

  Tensor<float> map({H, W});
  for (std::size_t p = 0; p < H * W; ++p) {
    float m = 0.0f;
    for (std::size_t c = 0; c < C; ++c)
      m = std::max(m, std::abs(g[p * C + c]));
    map[p] = m;
  }
  float lo = map[0], hi = map[0];
  for (std::size_t p = 1; p < H * W; ++p) {
    lo = std::min(lo, map[p]);
    hi = std::max(hi, map[p]);
  }
  if (hi == lo) return Tensor<float>({H, W});
  for (std::size_t p = 0; p < H * W; ++p) map[p] = (map[p] - lo) / (hi - lo);
  return map;
}

}  // namespace csab
