#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "disasterlens/tensor.hpp"

namespace disasterlens {

// The five image groups of the disaster dataset, with stable codes 0..4.
enum class ClassLabel : std::uint8_t {
  buildings_collapsed = 0,
  flames_or_smoke = 1,
  flood = 2,
  forests_rivers = 3,
  urban_landscape = 4,
};

inline constexpr std::size_t kClassCount = 5;

std::string_view class_name(ClassLabel label);
std::string_view class_name(std::size_t code);
std::optional<ClassLabel> parse_class_label(std::string_view name);
inline std::size_t class_code(ClassLabel label) { return static_cast<std::size_t>(label); }

struct Sample {
  std::string path;  // resolved against the manifest's directory
  ClassLabel label;
};

struct Manifest {
  std::vector<Sample> samples;
  std::array<std::size_t, kClassCount> class_counts{};
  std::size_t missing_files = 0;  // listed entries whose file does not exist (skipped)
  std::vector<std::string> missing_paths;
};

// CSV with a `path,label` header. Lines starting with '#' are comments. When
// `check_files` is set, entries whose file is absent are skipped and counted.
Manifest load_manifest(const std::filesystem::path& path, bool check_files = true);
Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir, bool check_files);

// Writes a manifest with paths relative to `path`'s directory when possible.
void write_manifest(const std::filesystem::path& path, std::span<const Sample> samples);

std::array<std::size_t, kClassCount> count_classes(std::span<const Sample> samples);

// Exactly one of train_fraction (in (0,1)) or test_count is set.
struct SplitSpec {
  std::optional<double> train_fraction;
  std::optional<std::size_t> test_count;
  std::uint64_t seed = 0;
  bool stratified = false;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Seeded uniformly random partition of [0, n). With a fraction, train receives
// round(f * n) items; with a count, test receives exactly that many. Both sides
// must be non-empty. `labels` is required when the spec is stratified.
SplitIndices split_indices(std::size_t n, const SplitSpec& spec, std::span<const std::size_t> labels = {});

template <class T>
std::pair<std::vector<T>, std::vector<T>> split_dataset(std::span<const T> items, const SplitIndices& split) {
  std::pair<std::vector<T>, std::vector<T>> out;
  out.first.reserve(split.train.size());
  out.second.reserve(split.test.size());
  for (auto i : split.train) out.first.push_back(items[i]);
  for (auto i : split.test) out.second.push_back(items[i]);
  return out;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_dataset(std::span<const Sample> samples, const SplitSpec& spec);

// A preprocessed image ready for the backbone.
struct Example {
  std::string path;
  std::size_t label = 0;
  Tensor image;  // [3,T,T], mean-subtracted
};

std::vector<std::size_t> labels_of(std::span<const Example> examples);

}  // namespace disasterlens
