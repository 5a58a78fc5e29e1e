#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "disasterlens/errors.hpp"
#include "disasterlens/tensor.hpp"

namespace disasterlens {

enum class Activation { none, relu };

struct ConvLayer {
  std::size_t filters = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  Activation activation = Activation::relu;
};

struct MaxPoolLayer {
  std::size_t window = 2;
  std::size_t stride = 2;
};

struct FlattenLayer {};

struct DenseLayer {
  std::size_t units = 0;
};

using Layer = std::variant<ConvLayer, MaxPoolLayer, FlattenLayer, DenseLayer>;

// Per-sample activation geometry (no batch axis).
struct ActivationShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t numel() const { return channels * height * width; }
  bool operator==(const ActivationShape&) const = default;
};

// Shape-chaining or layer-ordering violation.
class ArchitectureError : public Error {
 public:
  using Error::Error;
};

// One expected parameter tensor of a layer.
struct ParamSlot {
  std::size_t layer = 0;
  std::string name;  // "<layer>.<kernels|bias|weights>"
  Tensor::Shape shape;
  bool frozen = true;  // backbone parameters are frozen, head parameters trainable
};

// Validated, ordered layer stack: conv/maxpool backbone, one flatten, dense head.
class ArchitectureSpec {
 public:
  // Throws ArchitectureError if the stack does not chain. `lines`, when given,
  // carries the source line of each layer for diagnostics.
  ArchitectureSpec(ActivationShape input, std::vector<Layer> layers,
                   std::vector<std::size_t> lines = {});

  const ActivationShape& input() const noexcept { return input_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  // Output of layer i; after the flatten the shape is (features, 1, 1).
  const ActivationShape& output_shape(std::size_t i) const { return shapes_.at(i); }

  std::size_t flatten_index() const noexcept { return flatten_index_; }
  std::size_t feature_dim() const noexcept { return shapes_[flatten_index_].channels; }
  std::size_t class_count() const noexcept { return shapes_.back().channels; }
  ActivationShape backbone_output() const;

  const std::vector<ParamSlot>& params() const noexcept { return params_; }
  std::vector<ParamSlot> backbone_params() const;
  std::vector<ParamSlot> head_params() const;
  std::vector<std::size_t> dense_layer_indices() const;

  std::string to_text() const;

 private:
  ActivationShape input_;
  std::vector<Layer> layers_;
  std::vector<ActivationShape> shapes_;
  std::vector<ParamSlot> params_;
  std::size_t flatten_index_ = 0;
};

std::string param_name(std::size_t layer, std::string_view role);

// Line grammar: `input C H W`, `conv F K S P relu|none`, `maxpool W S`, `flatten`,
// `dense U`; `#` starts a comment.
ArchitectureSpec parse_arch(std::string_view text);
ArchitectureSpec load_arch(const std::filesystem::path& path);

}  // namespace disasterlens
