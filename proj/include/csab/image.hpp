#pragma once

#include <cstddef>
#include <string>

#include "csab/tensor.hpp"

namespace csab {

// Binary PPM (P6, maxval 255) decode to a [H,W,3] tensor in [0,1].
Tensor<float> read_ppm(const std::string& path);

// Writes a [H,W,3] tensor in [0,1] as binary PPM; values are clamped.
void write_ppm(const std::string& path, const Tensor<float>& img);

// Writes a [H,W] (or [H,W,1]) map as PPM with equal channels.
void write_ppm_gray(const std::string& path, const Tensor<float>& map);

// Bilinear resize of a [H,W,C] tensor using half-pixel sample centers.
// A same-size resize returns the input unchanged.
Tensor<float> resize_bilinear(const Tensor<float>& img, std::size_t out_h,
                              std::size_t out_w);

// Decodes an image file and resizes it to [out_h, out_w, 3] in [0,1].
// PPM is the supported interchange format; other extensions are rejected
// with an error naming the path.
Tensor<float> load_image(const std::string& path, std::size_t out_h,
                         std::size_t out_w);

}  // namespace csab
