#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "disasterlens/data.hpp"
#include "disasterlens/tensor.hpp"

namespace disasterlens {

// Decodes PPM (P6, maxval 255) or 8-bit PNG (RGB, RGBA, grayscale, palette) into
// [3,h,w] R,G,B values in [0,255]. Alpha is dropped; gray is replicated.
Tensor decode_image(const std::filesystem::path& path);
Tensor decode_image_bytes(std::span<const std::uint8_t> bytes);

// Values are rounded and clamped to [0,255].
std::vector<std::uint8_t> encode_ppm(const Tensor& image);
void write_ppm(const std::filesystem::path& path, const Tensor& image);

// Conventional ImageNet RGB means on the 0..255 scale.
inline constexpr std::array<float, 3> kImageNetMeans = {123.68f, 116.779f, 103.939f};

// Bilinear resize of [c,h,w] with half-pixel centers and edge clamping.
Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w);

// Resize to target x target, then subtract the per-channel means.
Tensor preprocess(const Tensor& image, std::size_t target, const std::array<float, 3>& means = kImageNetMeans);

// Decode + preprocess each sample. Runs on up to `threads` workers.
std::vector<Example> load_examples(std::span<const Sample> samples, std::size_t target,
                                   const std::array<float, 3>& means = kImageNetMeans, std::size_t threads = 1);

// Stacks [3,T,T] images into [n,3,T,T].
Tensor stack_images(std::span<const Example> examples, std::span<const std::size_t> indices);
Tensor stack_images(std::span<const Tensor> images);

}  // namespace disasterlens
