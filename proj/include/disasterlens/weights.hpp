#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "disasterlens/architecture.hpp"
#include "disasterlens/tensor.hpp"

namespace disasterlens {

struct WeightEntry {
  std::string name;
  Tensor tensor;
  bool frozen = false;
};

// Named tensors in insertion order (which is also CNWF file order).
class ModelWeights {
 public:
  // Replaces an entry with the same name, otherwise appends.
  void set(std::string name, Tensor tensor, bool frozen);

  const WeightEntry* find(std::string_view name) const;
  WeightEntry* find(std::string_view name);
  const Tensor& tensor(std::string_view name) const;

  const std::vector<WeightEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  // Overlays every entry of `other` onto this set.
  void merge(const ModelWeights& other);

  bool bit_equal(const ModelWeights& other) const;

 private:
  std::vector<WeightEntry> entries_;
};

inline constexpr std::uint32_t kCnwfVersion = 1;

// CNWF layout, all integers little-endian:
//   "CNWF" | u32 version | u32 count |
//   count x (u16 name_len | name | u8 frozen | u8 rank | rank x u32 dim | f32 data) |
//   u32 CRC-32 of everything before it
std::vector<std::uint8_t> encode_cnwf(const ModelWeights& weights);
ModelWeights decode_cnwf(std::span<const std::uint8_t> bytes);
std::size_t cnwf_encoded_size(const ModelWeights& weights);

void save_weights(const ModelWeights& weights, const std::filesystem::path& path);
ModelWeights load_weights(const std::filesystem::path& path);

struct BindingReport {
  std::vector<std::string> missing;     // slot with no entry
  std::vector<std::string> mismatched;  // entry shape differs from slot
  std::vector<std::string> wrong_flag;  // backbone not frozen or head frozen
  std::vector<std::string> unexpected;  // entry with no slot

  bool ok() const { return missing.empty() && mismatched.empty() && wrong_flag.empty() && unexpected.empty(); }
  std::string summary() const;
};

// With `require_head` false, head slots may be absent (a backbone-only file).
BindingReport check_binding(const ArchitectureSpec& spec, const ModelWeights& weights, bool require_head);

// Throws ShapeError with the report summary unless the binding is clean.
void bind_weights(const ArchitectureSpec& spec, const ModelWeights& weights, bool require_head);

// SHA-256 (hex) over names, shapes and raw bytes of the spec's backbone tensors.
std::string backbone_digest(const ArchitectureSpec& spec, const ModelWeights& weights);

}  // namespace disasterlens
