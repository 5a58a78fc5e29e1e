#include "disasterlens/model.hpp"

#include <cmath>
#include <cstring>

#include "disasterlens/errors.hpp"
#include "disasterlens/parallel.hpp"
#include "disasterlens/rng.hpp"

namespace disasterlens {

std::size_t default_thread_count() {
  const auto n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

Tensor Head::logits(const Tensor& features) const {
  if (layers.empty()) throw ShapeError("head has no layers");
  Tensor x = dense_forward(features, layers.front());
  for (std::size_t i = 1; i < layers.size(); ++i) x = dense_forward(x, layers[i]);
  return x;
}

Head init_head(const ArchitectureSpec& spec, HeadInit init, std::uint64_t seed) {
  Head head;
  const auto dense = spec.dense_layer_indices();
  for (std::size_t li = 0; li < dense.size(); ++li) {
    const std::size_t layer = dense[li];
    const std::size_t fan_in = spec.output_shape(layer - 1).channels;
    const std::size_t fan_out = spec.output_shape(layer).channels;
    auto p = DenseParams::zeros(fan_in, fan_out);
    if (init == HeadInit::glorot) {
      auto rng = make_rng(seed, "head-init", layer);
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (auto& w : p.weights.data()) w = static_cast<float>((2.0 * uniform01(rng) - 1.0) * limit);
    }
    head.layers.push_back(std::move(p));
  }
  return head;
}

Head head_from_weights(const ArchitectureSpec& spec, const ModelWeights& weights) {
  Head head;
  for (const auto layer : spec.dense_layer_indices()) {
    const auto& w = weights.tensor(param_name(layer, "weights"));
    const auto& b = weights.tensor(param_name(layer, "bias"));
    const auto expected_in = spec.output_shape(layer - 1).channels;
    const auto expected_out = spec.output_shape(layer).channels;
    if (w.shape() != Tensor::Shape{expected_in, expected_out} || b.shape() != Tensor::Shape{expected_out}) {
      throw ShapeError("head layer " + std::to_string(layer) + " has weights " + shape_string(w.shape()) +
                       ", expected " + shape_string({expected_in, expected_out}));
    }
    head.layers.emplace_back(w, b);
  }
  return head;
}

ModelWeights head_to_weights(const ArchitectureSpec& spec, const Head& head) {
  const auto dense = spec.dense_layer_indices();
  if (dense.size() != head.layers.size()) throw ShapeError("head depth does not match architecture");
  ModelWeights out;
  for (std::size_t i = 0; i < dense.size(); ++i) {
    out.set(param_name(dense[i], "weights"), head.layers[i].weights, false);
    out.set(param_name(dense[i], "bias"), head.layers[i].bias, false);
  }
  return out;
}

namespace {

Tensor backbone_single(const ArchitectureSpec& spec, const ModelWeights& weights, Tensor x) {
  const auto& layers = spec.layers();
  for (std::size_t i = 0; i < spec.flatten_index(); ++i) {
    if (const auto* conv = std::get_if<ConvLayer>(&layers[i])) {
      x = conv2d_forward(x, weights.tensor(param_name(i, "kernels")), weights.tensor(param_name(i, "bias")),
                         conv->stride, conv->pad);
      if (conv->activation == Activation::relu) x = relu(std::move(x));
    } else if (const auto* pool = std::get_if<MaxPoolLayer>(&layers[i])) {
      x = maxpool2d_forward(x, pool->window, pool->stride);
    }
  }
  return x;
}

}  // namespace

Tensor forward_features(const ArchitectureSpec& spec, const ModelWeights& weights, const Tensor& batch,
                        std::size_t threads) {
  const auto& in = spec.input();
  if (batch.rank() != 4 || batch.dim(1) != in.channels || batch.dim(2) != in.height || batch.dim(3) != in.width) {
    throw ShapeError("batch " + shape_string(batch.shape()) + " does not match architecture input [n," +
                     std::to_string(in.channels) + "," + std::to_string(in.height) + "," +
                     std::to_string(in.width) + "]");
  }
  for (const auto& slot : spec.backbone_params()) {
    if (weights.tensor(slot.name).shape() != slot.shape) {
      throw ShapeError("weight " + slot.name + " has shape " + shape_string(weights.tensor(slot.name).shape()) +
                       ", expected " + shape_string(slot.shape));
    }
  }
  const std::size_t n = batch.dim(0);
  const std::size_t image_size = in.numel();
  const std::size_t dim = spec.feature_dim();
  Tensor out({n, dim});
  parallel_for(n, threads, [&](std::size_t img) {
    Tensor single({1, in.channels, in.height, in.width},
                  std::vector<float>(batch.raw() + img * image_size, batch.raw() + (img + 1) * image_size));
    const Tensor f = backbone_single(spec, weights, std::move(single));
    std::memcpy(out.raw() + img * dim, f.raw(), dim * sizeof(float));
  });
  return out;
}

Tensor forward_head(const Tensor& features, const Head& head) { return softmax(head.logits(features)); }

std::vector<std::size_t> predict(const ArchitectureSpec& spec, const ModelWeights& weights, const Tensor& batch,
                                 std::size_t threads) {
  const Head head = head_from_weights(spec, weights);
  return argmax_rows(forward_head(forward_features(spec, weights, batch, threads), head));
}

}  // namespace disasterlens
