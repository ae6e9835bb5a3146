#pragma once

#include <cstdint>

#include "csab/tensor.hpp"

namespace csab {

struct AugmentConfig {
  double rotation_deg = 15.0;
  double width_shift_frac = 0.1;
  double scale_lo = 0.9;
  double scale_hi = 1.1;
  double hflip_prob = 0.5;
  double contrast_lo = 0.7;
  double contrast_hi = 1.3;
  double brightness_lo = 0.7;
  double brightness_hi = 1.3;
  std::uint64_t seed = 0;

  void validate() const;

  // All ranges collapsed so augmentation is a bit-exact no-op.
  static AugmentConfig identity();

  bool operator==(const AugmentConfig&) const = default;
};

// One sample's augmentation parameters.
struct AugmentDraw {
  double rotation_deg = 0.0;
  double shift_frac = 0.0;
  double scale = 1.0;
  bool hflip = false;
  double contrast = 1.0;
  double brightness = 1.0;
};

// Draws the per-sample parameters from a stream keyed by
// (cfg.seed, epoch, batch_index, sample_index); pure and reproducible.
AugmentDraw sample_draw(const AugmentConfig& cfg, std::uint64_t epoch,
                        std::uint64_t batch_index,
                        std::uint64_t sample_index);

// Rotation about the image center, horizontal shift, isotropic scale about
// the center, then optional horizontal flip; bilinear resampling with edge
// replication. The identity draw returns the input bit-exactly.
Tensor<float> geometric_transform(const Tensor<float>& img,
                                  const AugmentDraw& draw);

// out = clamp(brightness * (contrast * (img - 0.5) + 0.5), 0, 1).
// Unit factors return the input bit-exactly.
Tensor<float> color_jitter(const Tensor<float>& img, double contrast,
                           double brightness);

// Applies geometric then color augmentation to every sample of a
// [N,H,W,3] batch with per-sample draws.
Tensor<float> augment_batch(const Tensor<float>& batch,
                            const AugmentConfig& cfg, std::uint64_t epoch,
                            std::uint64_t batch_index);

}  // namespace csab
