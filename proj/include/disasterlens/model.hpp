#pragma once

#include <cstdint>
#include <vector>

#include "disasterlens/architecture.hpp"
#include "disasterlens/nn_ops.hpp"
#include "disasterlens/weights.hpp"

namespace disasterlens {

// The trainable dense stack after the flatten, in architecture order.
struct Head {
  std::vector<DenseParams> layers;

  Tensor logits(const Tensor& features) const;
  std::size_t class_count() const { return layers.back().out_features(); }
};

enum class HeadInit {
  glorot,  // uniform in +-sqrt(6 / (fan_in + fan_out)), zero bias
  zeros,
};

Head init_head(const ArchitectureSpec& spec, HeadInit init, std::uint64_t seed);

Head head_from_weights(const ArchitectureSpec& spec, const ModelWeights& weights);

// Head entries are named after their layers and flagged trainable.
ModelWeights head_to_weights(const ArchitectureSpec& spec, const Head& head);

// Runs every layer up to and including the flatten on batch [n,C,H,W] and returns
// [n, feature_dim]. Backbone tensors are only read. Images are independent, so
// the result does not depend on `threads`.
Tensor forward_features(const ArchitectureSpec& spec, const ModelWeights& weights, const Tensor& batch,
                        std::size_t threads = 1);

// softmax(head logits).
Tensor forward_head(const Tensor& features, const Head& head);

// argmax of class probabilities; weights must carry the head entries.
std::vector<std::size_t> predict(const ArchitectureSpec& spec, const ModelWeights& weights, const Tensor& batch,
                                 std::size_t threads = 1);

}  // namespace disasterlens
