#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "csab/augment.hpp"
#include "csab/rng.hpp"
#include "doctest.h"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace csab;

namespace {

Tensor<float> random_image(std::uint64_t seed, std::size_t H = 16,
                           std::size_t W = 16) {
  Rng rng(seed);
  Tensor<float> img({H, W, 3});
  for (std::size_t i = 0; i < img.numel(); ++i)
    img[i] = static_cast<float>(rng.uniform());
  return img;
}

// Pearson chi-square statistic of `values` against a uniform histogram
// over [lo, hi) with `bins` bins.
double chi_square_uniform(const std::vector<double>& values, double lo,
                          double hi, std::size_t bins) {
  std::vector<double> count(bins, 0.0);
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - lo) / (hi - lo) *
                                      static_cast<double>(bins));
    if (b >= bins) b = bins - 1;
    count[b] += 1.0;
  }
  const double expect =
      static_cast<double>(values.size()) / static_cast<double>(bins);
  double stat = 0.0;
  for (double c : count) stat += (c - expect) * (c - expect) / expect;
  return stat;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(AugmentConfig{}.validate());
  CHECK_NOTHROW(AugmentConfig::identity().validate());
  AugmentConfig c;
  c.rotation_deg = -1.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = AugmentConfig{};
  c.scale_lo = 1.2;
  c.scale_hi = 0.8;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = AugmentConfig{};
  c.hflip_prob = 1.5;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = AugmentConfig{};
  c.contrast_lo = 0.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("identity config is a bit-exact no-op") {
  const AugmentConfig id = AugmentConfig::identity();
  const Tensor<float> img = random_image(5);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const AugmentDraw d = sample_draw(id, 0, 0, s);
    CHECK(d.rotation_deg == 0.0);
    CHECK(d.scale == 1.0);
    CHECK_FALSE(d.hflip);
    Tensor<float> out = geometric_transform(img, d);
    out = color_jitter(out, d.contrast, d.brightness);
    CHECK(out == img);
  }
  Tensor<float> batch({3, 16, 16, 3});
  for (std::size_t i = 0; i < batch.numel(); ++i)
    batch[i] = static_cast<float>((i % 97) / 96.0);
  CHECK(augment_batch(batch, id, 4, 9) == batch);
}

TEST_CASE("a pure flip mirrors exactly and undoes itself") {
  const Tensor<float> img = random_image(7);
  AugmentDraw d;
  d.rotation_deg = 0.0;
  d.shift_frac = 0.0;
  d.scale = 1.0;
  d.hflip = true;
  const Tensor<float> flipped = geometric_transform(img, d);
  const std::size_t W = img.dim(1);
  for (std::size_t y = 0; y < img.dim(0); ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        CHECK(flipped[(y * W + x) * 3 + c] ==
              img[(y * W + (W - 1 - x)) * 3 + c]);
  CHECK(geometric_transform(flipped, d) == img);
}

TEST_CASE("draws are deterministic in the seed tuple") {
  AugmentConfig cfg;
  cfg.seed = 77;
  const AugmentDraw a = sample_draw(cfg, 1, 2, 3);
  const AugmentDraw b = sample_draw(cfg, 1, 2, 3);
  CHECK(a.rotation_deg == b.rotation_deg);
  CHECK(a.shift_frac == b.shift_frac);
  CHECK(a.scale == b.scale);
  CHECK(a.hflip == b.hflip);
  CHECK(a.contrast == b.contrast);
  CHECK(a.brightness == b.brightness);

  // Any change to the tuple moves the draw.
  CHECK(sample_draw(cfg, 2, 2, 3).rotation_deg != a.rotation_deg);
  CHECK(sample_draw(cfg, 1, 3, 3).rotation_deg != a.rotation_deg);
  CHECK(sample_draw(cfg, 1, 2, 4).rotation_deg != a.rotation_deg);
  AugmentConfig other = cfg;
  other.seed = 78;
  CHECK(sample_draw(other, 1, 2, 3).rotation_deg != a.rotation_deg);
}

TEST_CASE("10k factor draws stay in range and look uniform") {
  AugmentConfig cfg;  // defaults: contrast/brightness in [0.7, 1.3]
  cfg.seed = 1234;
  std::vector<double> contrast, brightness;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const AugmentDraw d = sample_draw(cfg, 0, i / 32, i % 32);
    CHECK(d.contrast >= 0.7);
    CHECK(d.contrast <= 1.3);
    CHECK(d.brightness >= 0.7);
    CHECK(d.brightness <= 1.3);
    CHECK(d.rotation_deg >= -15.0);
    CHECK(d.rotation_deg <= 15.0);
    CHECK(d.scale >= 0.9);
    CHECK(d.scale <= 1.1);
    CHECK(std::abs(d.shift_frac) <= 0.1);
    contrast.push_back(d.contrast);
    brightness.push_back(d.brightness);
  }
  // 20 bins, 19 dof: chi-square must stay under the p=0.01 critical value.
  const double kCrit = 36.1909;
  CHECK(chi_square_uniform(contrast, 0.7, 1.3, 20) < kCrit);
  CHECK(chi_square_uniform(brightness, 0.7, 1.3, 20) < kCrit);
}

TEST_CASE("augmented pixels stay inside [0,1]") {
  AugmentConfig cfg;
  cfg.seed = 99;
  const Tensor<float> img = random_image(11);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const AugmentDraw d = sample_draw(cfg, 3, 1, s);
    Tensor<float> out = geometric_transform(img, d);
    out = color_jitter(out, d.contrast, d.brightness);
    for (std::size_t i = 0; i < out.numel(); ++i) {
      CHECK(out[i] >= 0.0f);
      CHECK(out[i] <= 1.0f);
    }
  }
}

TEST_CASE("same seed tuple gives bit-identical batches") {
  AugmentConfig cfg;
  cfg.seed = 2024;
  Tensor<float> batch({4, 16, 16, 3});
  Rng rng(15);
  for (std::size_t i = 0; i < batch.numel(); ++i)
    batch[i] = static_cast<float>(rng.uniform());
  const Tensor<float> a = augment_batch(batch, cfg, 2, 5);
  const Tensor<float> b = augment_batch(batch, cfg, 2, 5);
  CHECK(a == b);
  CHECK_FALSE(augment_batch(batch, cfg, 2, 6) == a);
  CHECK_FALSE(a == batch);
}

TEST_CASE("color jitter applies contrast about mid-gray, then brightness") {
  Tensor<float> img({1, 1, 3}, {0.5f, 0.9f, 0.1f});
  const Tensor<float> out = color_jitter(img, 1.2, 0.8);
  CHECK(out[0] == doctest::Approx(0.8 * 0.5));
  CHECK(out[1] == doctest::Approx(0.8 * (1.2 * 0.4 + 0.5)));
  CHECK(out[2] == doctest::Approx(0.8 * (1.2 * -0.4 + 0.5)));

  // Saturation clamps at the ends.
  Tensor<float> hot({1, 1, 1}, {1.0f});
  CHECK(color_jitter(hot, 1.3, 1.3)[0] == 1.0f);
  Tensor<float> cold({1, 1, 1}, {0.0f});
  CHECK(color_jitter(cold, 1.3, 0.7)[0] >= 0.0f);
}

TEST_CASE("a pure horizontal shift moves content by whole pixels") {
  // One bright column at x=8 on a black image; shift by 4/16 = 4 pixels.
  Tensor<float> img({16, 16, 1});
  for (std::size_t y = 0; y < 16; ++y) img[(y * 16 + 8)] = 1.0f;
  AugmentDraw d;
  d.rotation_deg = 0.0;
  d.scale = 1.0;
  d.hflip = false;
  d.shift_frac = 4.0 / 16.0;
  const Tensor<float> out = geometric_transform(img, d);
  for (std::size_t y = 0; y < 16; ++y) {
    CHECK(out[(y * 16 + 12)] == doctest::Approx(1.0f));
    CHECK(out[(y * 16 + 8)] == doctest::Approx(0.0f));
  }
}

TEST_CASE("rotation keeps the center pixel put") {
  // A 17-wide image has an exact center pixel; rotating about the center
  // leaves it (and only it) guaranteed unchanged.
  Tensor<float> img({17, 17, 1});
  img[(8 * 17 + 8)] = 1.0f;
  AugmentDraw d;
  d.rotation_deg = 30.0;
  d.scale = 1.0;
  d.hflip = false;
  d.shift_frac = 0.0;
  const Tensor<float> out = geometric_transform(img, d);
  CHECK(out[(8 * 17 + 8)] == doctest::Approx(1.0f));
}

TEST_CASE("geometric_transform validates rank") {
  AugmentDraw d;
  CHECK_THROWS_AS(geometric_transform(Tensor<float>({4, 4}), d), ShapeError);
  CHECK_THROWS_AS(augment_batch(Tensor<float>({4, 4, 1}), AugmentConfig{}, 0,
                                0),
                  ShapeError);
}
