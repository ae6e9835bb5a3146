#pragma once

#include "csab/checkpoint.hpp"
#include "csab/tensor.hpp"

namespace csab {

// Gradient saliency of one class logit with respect to the input pixels:
// |d logit / d pixel|, max over channels, min-max normalized to [0,1].
// A constant (including all-zero) gradient map comes back as zeros. The
// image must already match the checkpoint's input size.
Tensor<float> saliency_map(const Checkpoint& cp, const Tensor<float>& image,
                           int class_index);

}  // namespace csab
