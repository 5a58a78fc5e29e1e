#include "disasterlens/augment.hpp"

#include <cmath>

#include "disasterlens/errors.hpp"

namespace disasterlens {

AugmentationConfig AugmentationConfig::identity() {
  AugmentationConfig cfg;
  cfg.max_translation_fraction = 0.0;
  cfg.enable_transpose = cfg.enable_horizontal_flip = cfg.enable_vertical_flip = false;
  cfg.rgb_jitter_stddev = 0.0;
  return cfg;
}

void AugmentationConfig::validate() const {
  if (!(max_translation_fraction >= 0.0 && max_translation_fraction <= 1.0)) {
    throw ConfigError("max translation fraction must lie in [0,1]");
  }
  if (!(rgb_jitter_stddev >= 0.0)) throw ConfigError("RGB jitter stddev must be non-negative");
}

AugmentParams sample_augment_params(const AugmentationConfig& cfg, std::size_t side, Rng& rng) {
  cfg.validate();
  AugmentParams p;
  const auto max_shift = static_cast<std::int64_t>(std::floor(cfg.max_translation_fraction * static_cast<double>(side)));
  if (max_shift > 0) {
    p.shift_y = uniform_int(rng, -max_shift, max_shift);
    p.shift_x = uniform_int(rng, -max_shift, max_shift);
  }
  if (cfg.enable_transpose) p.transpose = coin_flip(rng);
  if (cfg.enable_horizontal_flip) p.flip_horizontal = coin_flip(rng);
  if (cfg.enable_vertical_flip) p.flip_vertical = coin_flip(rng);
  if (cfg.rgb_jitter_stddev > 0.0) {
    for (auto& a : p.lighting_alpha) a = cfg.rgb_jitter_stddev * standard_normal(rng);
  }
  return p;
}

std::array<float, 3> lighting_offset(const std::array<double, 3>& alpha) {
  std::array<float, 3> out{};
  for (std::size_t c = 0; c < 3; ++c) {
    double v = 0.0;
    for (std::size_t k = 0; k < 3; ++k) v += kRgbEigenvectors[c][k] * alpha[k] * kRgbEigenvalues[k];
    out[c] = static_cast<float>(255.0 * v);
  }
  return out;
}

Tensor apply_augment(const Tensor& image, const AugmentParams& p) {
  if (image.rank() != 3 || image.dim(1) != image.dim(2)) {
    throw ShapeError("augment: expected square [c,T,T], got " + shape_string(image.shape()));
  }
  const std::size_t c = image.dim(0);
  const auto side = static_cast<std::int64_t>(image.dim(1));
  const auto t = static_cast<std::size_t>(side);
  Tensor out(image.shape(), 0.0f);

  // Every geometric step is a permutation of coordinates (plus zero fill), so
  // compose them as one inverse map from output pixel to source pixel.
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* src = image.raw() + ch * t * t;
    float* dst = out.raw() + ch * t * t;
    for (std::int64_t y = 0; y < side; ++y)
      for (std::int64_t x = 0; x < side; ++x) {
        std::int64_t sy = p.flip_vertical ? side - 1 - y : y;
        std::int64_t sx = p.flip_horizontal ? side - 1 - x : x;
        if (p.transpose) std::swap(sy, sx);
        sy -= p.shift_y;
        sx -= p.shift_x;
        if (sy < 0 || sx < 0 || sy >= side || sx >= side) continue;
        dst[y * side + x] = src[sy * side + sx];
      }
  }

  if (p.lighting_alpha != std::array<double, 3>{}) {
    const auto offset = lighting_offset(p.lighting_alpha);
    for (std::size_t ch = 0; ch < c && ch < 3; ++ch) {
      float* dst = out.raw() + ch * t * t;
      for (std::size_t i = 0; i < t * t; ++i) dst[i] += offset[ch];
    }
  }
  return out;
}

Tensor augment(const Tensor& image, const AugmentationConfig& cfg, Rng& rng) {
  if (image.rank() != 3 || image.dim(1) != image.dim(2)) {
    throw ShapeError("augment: expected square [c,T,T], got " + shape_string(image.shape()));
  }
  return apply_augment(image, sample_augment_params(cfg, image.dim(1), rng));
}

}  // namespace disasterlens
