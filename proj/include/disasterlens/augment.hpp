#pragma once

#include <array>
#include <cstdint>

#include "disasterlens/rng.hpp"
#include "disasterlens/tensor.hpp"

namespace disasterlens {

struct AugmentationConfig {
  double max_translation_fraction = 0.1;  // of each side, in [0,1]
  bool enable_transpose = true;
  bool enable_horizontal_flip = true;
  bool enable_vertical_flip = true;
  double rgb_jitter_stddev = 0.1;  // stddev of the per-component lighting coefficients
  std::uint64_t seed = 0;

  // All toggles off and magnitudes zero: the transform is the identity.
  static AugmentationConfig identity();
  void validate() const;
};

// One concrete draw of the random transform.
struct AugmentParams {
  std::int64_t shift_y = 0;  // content moves down by shift_y rows
  std::int64_t shift_x = 0;  // content moves right by shift_x columns
  bool transpose = false;
  bool flip_horizontal = false;
  bool flip_vertical = false;
  std::array<double, 3> lighting_alpha{};  // coefficients of the RGB principal components
};

// Principal components of ImageNet RGB pixel covariance on the 0..1 scale, as
// used for lighting noise; columns of the eigenvector matrix are components.
inline constexpr std::array<double, 3> kRgbEigenvalues = {0.2175, 0.0188, 0.0045};
inline constexpr std::array<std::array<double, 3>, 3> kRgbEigenvectors = {{
    {-0.5675, 0.7192, 0.4009},
    {-0.5808, -0.0045, -0.8140},
    {-0.5836, -0.6948, 0.4203},
}};

AugmentParams sample_augment_params(const AugmentationConfig& cfg, std::size_t side, Rng& rng);

// Applies, in order: translation (vacated pixels zero), transpose, horizontal
// flip, vertical flip, RGB lighting shift. Input is [3,T,T].
Tensor apply_augment(const Tensor& image, const AugmentParams& params);

// Per-channel offset added by the lighting shift, on the 0..255 scale.
std::array<float, 3> lighting_offset(const std::array<double, 3>& alpha);

Tensor augment(const Tensor& image, const AugmentationConfig& cfg, Rng& rng);

}  // namespace disasterlens
