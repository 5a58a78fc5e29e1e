#include "disasterlens/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "disasterlens/errors.hpp"
#include "disasterlens/image.hpp"
#include "disasterlens/rng.hpp"

namespace disasterlens {

namespace {

struct TextureClass {
  std::array<double, 3> tint;
  double cycles;  // across the image side
};

constexpr std::array<TextureClass, kClassCount> kTextures = {{
    {{135, 115, 100}, 3.0},
    {{150, 105, 85}, 6.0},
    {{105, 115, 135}, 4.5},
    {{100, 125, 100}, 8.0},
    {{125, 120, 115}, 12.0},
}};

constexpr double kAmplitude = 55.0;
constexpr double kTintJitter = 15.0;
constexpr double kPixelNoise = 18.0;

// ReLU stacks without bias are positively homogeneous, so this divisor sets the
// feature scale directly; it brings mean squared feature norms to order 1-10 on
// mean-subtracted 0..255 inputs.
constexpr double kFirstLayerScale = 256.0;

}  // namespace

std::vector<SyntheticImage> generate_texture_images(const SyntheticConfig& cfg) {
  if (cfg.per_class == 0 || cfg.side == 0) throw ConfigError("synthetic dataset needs positive size");
  const std::size_t total = cfg.per_class * kClassCount;
  const std::size_t s = cfg.side;
  std::vector<SyntheticImage> out;
  out.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t label = i % kClassCount;
    const auto& tex = kTextures[label];
    auto rng = make_rng(cfg.seed, "synthetic", i);
    const double theta = std::numbers::pi * uniform01(rng);
    const double phase = 2.0 * std::numbers::pi * uniform01(rng);
    const double cycles = tex.cycles * (0.9 + 0.2 * uniform01(rng));
    std::array<double, 3> tint{};
    for (std::size_t c = 0; c < 3; ++c) tint[c] = tex.tint[c] + kTintJitter * (2.0 * uniform01(rng) - 1.0);
    const double kx = 2.0 * std::numbers::pi * cycles * std::cos(theta) / static_cast<double>(s);
    const double ky = 2.0 * std::numbers::pi * cycles * std::sin(theta) / static_cast<double>(s);

    Tensor img({3, s, s});
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x) {
        const double wave = std::sin(kx * static_cast<double>(x) + ky * static_cast<double>(y) + phase);
        for (std::size_t c = 0; c < 3; ++c) {
          // Channels modulate with decreasing strength so stripes also carry colour.
          const double v = tint[c] + kAmplitude * (1.0 - 0.25 * static_cast<double>(c)) * wave +
                           kPixelNoise * standard_normal(rng);
          img[(c * s + y) * s + x] = static_cast<float>(std::clamp(std::round(v), 0.0, 255.0));
        }
      }
    out.push_back({std::move(img), label});
  }
  return out;
}

std::vector<Example> synthetic_examples(const SyntheticConfig& cfg) {
  auto images = generate_texture_images(cfg);
  std::vector<Example> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.push_back({"synthetic/" + std::to_string(i), images[i].label, preprocess(images[i].image, cfg.side)});
  }
  return out;
}

ArchitectureSpec small_backbone_arch(std::size_t side, std::size_t classes) {
  if (side % 8 != 0) throw ConfigError("small backbone needs a side divisible by 8");
  const std::string text = "input 3 " + std::to_string(side) + " " + std::to_string(side) +
                           "\n"
                           "conv 8 3 1 1 relu\nmaxpool 2 2\n"
                           "conv 16 3 1 1 relu\nmaxpool 2 2\n"
                           "conv 32 3 1 1 relu\nmaxpool 2 2\n"
                           "flatten\ndense " +
                           std::to_string(classes) + "\n";
  return parse_arch(text);
}

ModelWeights random_backbone_weights(const ArchitectureSpec& spec, std::uint64_t seed) {
  ModelWeights w;
  bool first = true;
  for (const auto& slot : spec.backbone_params()) {
    Tensor t(slot.shape, 0.0f);
    if (slot.shape.size() == 4) {
      const double fan_in = static_cast<double>(slot.shape[1] * slot.shape[2] * slot.shape[3]);
      double stddev = std::sqrt(2.0 / fan_in);
      if (first) stddev /= kFirstLayerScale;
      first = false;
      auto rng = make_rng(seed, "backbone-init", slot.layer);
      for (auto& v : t.data()) v = static_cast<float>(stddev * standard_normal(rng));
    }
    w.set(slot.name, std::move(t), true);
  }
  return w;
}

SyntheticFiles write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticConfig& cfg,
                                       std::uint64_t backbone_seed) {
  std::filesystem::create_directories(dir / "images");
  const auto images = generate_texture_images(cfg);
  std::vector<Sample> samples;
  samples.reserve(images.size());
  char name[32];
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::snprintf(name, sizeof name, "%05zu.ppm", i);
    const auto path = dir / "images" / name;
    write_ppm(path, images[i].image);
    samples.push_back({path.string(), static_cast<ClassLabel>(images[i].label)});
  }
  SyntheticFiles files{dir / "manifest.csv", dir / "backbone.arch", dir / "backbone.cnwf"};
  write_manifest(files.manifest, samples);
  const auto spec = small_backbone_arch(cfg.side);
  {
    std::ofstream arch(files.arch, std::ios::trunc);
    if (!arch) throw IoError("cannot write " + files.arch.string());
    arch << "# small random backbone for the synthetic texture dataset\n" << spec.to_text();
  }
  save_weights(random_backbone_weights(spec, backbone_seed), files.weights);
  return files;
}

}  // namespace disasterlens
