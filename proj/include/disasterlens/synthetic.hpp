#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "disasterlens/architecture.hpp"
#include "disasterlens/data.hpp"
#include "disasterlens/weights.hpp"

namespace disasterlens {

// Procedural stand-in for the aerial dataset: each class is a family of noisy
// sinusoidal textures with its own tint and spatial frequency at a random
// orientation and phase. The class signal survives translation, transposes and
// flips, so it is compatible with the augmentation set.
struct SyntheticConfig {
  std::size_t per_class = 100;
  std::size_t side = 64;
  std::uint64_t seed = 1;
};

struct SyntheticImage {
  Tensor image;  // [3,side,side], values in [0,255]
  std::size_t label = 0;
};

// Images are interleaved by class (0,1,2,3,4,0,1,...).
std::vector<SyntheticImage> generate_texture_images(const SyntheticConfig& cfg);

// Preprocessed with the ImageNet means; paths are "synthetic/<index>".
std::vector<Example> synthetic_examples(const SyntheticConfig& cfg);

// Three conv(3x3, relu) + maxpool(2) blocks of widths 8, 16, 32, then flatten and dense(classes).
ArchitectureSpec small_backbone_arch(std::size_t side, std::size_t classes = kClassCount);

// He-normal kernels and zero biases, all frozen. The first layer is scaled for
// mean-subtracted inputs on the 0..255 scale.
ModelWeights random_backbone_weights(const ArchitectureSpec& spec, std::uint64_t seed);

struct SyntheticFiles {
  std::filesystem::path manifest;
  std::filesystem::path arch;
  std::filesystem::path weights;
};

// Writes images/NNNN.ppm, manifest.csv, backbone.arch and backbone.cnwf under dir.
SyntheticFiles write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticConfig& cfg,
                                       std::uint64_t backbone_seed);

}  // namespace disasterlens
