#include "csab/augment.hpp"

#include <algorithm>
#include <cmath>

#include "csab/error.hpp"
#include "csab/rng.hpp"

namespace csab {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Affine {
  // x' = a*x + b*y + c ;  y' = d*x + e*y + f
  double a = 1, b = 0, c = 0, d = 0, e = 1, f = 0;
};

float sample_edge_bilinear(const Tensor<float>& img, double x, double y,
                           std::size_t ch) {
  const std::size_t H = img.dim(0), W = img.dim(1), C = img.dim(2);
  const double x0f = std::floor(x), y0f = std::floor(y);
  const double wx = x - x0f, wy = y - y0f;
  auto cl = [](double v, std::size_t n) {
    return static_cast<std::size_t>(
        std::clamp(v, 0.0, static_cast<double>(n - 1)));
  };
  const std::size_t x0 = cl(x0f, W), x1 = cl(x0f + 1.0, W);
  const std::size_t y0 = cl(y0f, H), y1 = cl(y0f + 1.0, H);
  const double v00 = img[(y0 * W + x0) * C + ch];
  const double v01 = img[(y0 * W + x1) * C + ch];
  const double v10 = img[(y1 * W + x0) * C + ch];
  const double v11 = img[(y1 * W + x1) * C + ch];
  const double top = v00 * (1.0 - wx) + v01 * wx;
  const double bot = v10 * (1.0 - wx) + v11 * wx;
  return static_cast<float>(top * (1.0 - wy) + bot * wy);
}

}  // namespace

void AugmentConfig::validate() const {
  if (rotation_deg < 0.0)
    throw UsageError("augment config: rotation_deg must be >= 0");
  if (width_shift_frac < 0.0)
    throw UsageError("augment config: width_shift_frac must be >= 0");
  if (scale_lo <= 0.0 || scale_hi < scale_lo)
    throw UsageError("augment config: scale range must be positive with "
                     "lo <= hi");
  if (hflip_prob < 0.0 || hflip_prob > 1.0)
    throw UsageError("augment config: hflip_prob must be in [0,1]");
  if (contrast_lo <= 0.0 || contrast_hi < contrast_lo)
    throw UsageError("augment config: contrast range must be positive with "
                     "lo <= hi");
  if (brightness_lo <= 0.0 || brightness_hi < brightness_lo)
    throw UsageError("augment config: brightness range must be positive "
                     "with lo <= hi");
}

AugmentConfig AugmentConfig::identity() {
  AugmentConfig c;
  c.rotation_deg = 0.0;
  c.width_shift_frac = 0.0;
  c.scale_lo = c.scale_hi = 1.0;
  c.hflip_prob = 0.0;
  c.contrast_lo = c.contrast_hi = 1.0;
  c.brightness_lo = c.brightness_hi = 1.0;
  return c;
}

AugmentDraw sample_draw(const AugmentConfig& cfg, std::uint64_t epoch,
                        std::uint64_t batch_index,
                        std::uint64_t sample_index) {
  cfg.validate();
  Rng rng(hash_seed(cfg.seed, epoch, batch_index, sample_index));
  AugmentDraw d;
  d.rotation_deg = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg);
  d.shift_frac = rng.uniform(-cfg.width_shift_frac, cfg.width_shift_frac);
  d.scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
  d.hflip = rng.bernoulli(cfg.hflip_prob);
  d.contrast = rng.uniform(cfg.contrast_lo, cfg.contrast_hi);
  d.brightness = rng.uniform(cfg.brightness_lo, cfg.brightness_hi);
  return d;
}

Tensor<float> geometric_transform(const Tensor<float>& img,
                                  const AugmentDraw& draw) {
  if (img.rank() != 3)
    throw ShapeError("geometric_transform: expected [H,W,C], got " +
                     shape_str(img.shape()));
  const std::size_t H = img.dim(0), W = img.dim(1), C = img.dim(2);
  const bool identity_geo = draw.rotation_deg == 0.0 &&
                            draw.shift_frac == 0.0 && draw.scale == 1.0;
  if (identity_geo && !draw.hflip) return img;
  if (identity_geo && draw.hflip) {
    // Pure flip stays bit-exact (and is its own inverse).
    Tensor<float> out(img.shape());
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        for (std::size_t ch = 0; ch < C; ++ch)
          out[(y * W + x) * C + ch] = img[(y * W + (W - 1 - x)) * C + ch];
    return out;
  }

  // Forward chain on pixel-center coordinates: rotate about the center,
  // shift horizontally, scale about the center, flip. Resampling walks the
  // inverse chain from each destination pixel.
  const double cx = (static_cast<double>(W) - 1.0) / 2.0;
  const double cy = (static_cast<double>(H) - 1.0) / 2.0;
  const double theta = draw.rotation_deg * kPi / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  const double dx = draw.shift_frac * static_cast<double>(W);
  const double inv_s = 1.0 / draw.scale;

  Tensor<float> out(img.shape());
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      double px = static_cast<double>(x);
      double py = static_cast<double>(y);
      if (draw.hflip) px = (static_cast<double>(W) - 1.0) - px;
      // inverse scale about center
      px = cx + (px - cx) * inv_s;
      py = cy + (py - cy) * inv_s;
      // inverse shift
      px -= dx;
      // inverse rotation about center
      const double rx = px - cx, ry = py - cy;
      const double sx = cx + ct * rx + st * ry;
      const double sy = cy - st * rx + ct * ry;
      for (std::size_t ch = 0; ch < C; ++ch)
        out[(y * W + x) * C + ch] = sample_edge_bilinear(img, sx, sy, ch);
    }
  }
  return out;
}

Tensor<float> color_jitter(const Tensor<float>& img, double contrast,
                           double brightness) {
  if (contrast == 1.0 && brightness == 1.0) return img;
  Tensor<float> out(img.shape());
  for (std::size_t i = 0; i < img.numel(); ++i) {
    const double v =
        brightness * (contrast * (static_cast<double>(img[i]) - 0.5) + 0.5);
    out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

Tensor<float> augment_batch(const Tensor<float>& batch,
                            const AugmentConfig& cfg, std::uint64_t epoch,
                            std::uint64_t batch_index) {
  if (batch.rank() != 4)
    throw ShapeError("augment_batch: expected [N,H,W,C], got " +
                     shape_str(batch.shape()));
  cfg.validate();
  const std::size_t N = batch.dim(0);
  const std::size_t sample_sz = batch.numel() / std::max<std::size_t>(N, 1);
  Tensor<float> out(batch.shape());
  Tensor<float> img({batch.dim(1), batch.dim(2), batch.dim(3)});
  for (std::size_t n = 0; n < N; ++n) {
    std::copy(batch.data() + n * sample_sz,
              batch.data() + (n + 1) * sample_sz, img.data());
    const AugmentDraw d = sample_draw(cfg, epoch, batch_index, n);
    Tensor<float> aug = geometric_transform(img, d);
    aug = color_jitter(aug, d.contrast, d.brightness);
    std::copy(aug.data(), aug.data() + sample_sz, out.data() + n * sample_sz);
  }
  return out;
}

}  // namespace csab
