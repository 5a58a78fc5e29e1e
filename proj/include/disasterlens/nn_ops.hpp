#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "disasterlens/tensor.hpp"

namespace disasterlens {

// Trainable dense layer: y = x * weights + bias. Velocities hold SGD momentum state.
struct DenseParams {
  Tensor weights;          // [in_features, out_features]
  Tensor bias;             // [out_features]
  Tensor weight_velocity;  // same shape as weights
  Tensor bias_velocity;    // same shape as bias

  DenseParams() = default;
  DenseParams(Tensor w, Tensor b);

  static DenseParams zeros(std::size_t in_features, std::size_t out_features);

  std::size_t in_features() const { return weights.dim(0); }
  std::size_t out_features() const { return weights.dim(1); }
};

struct DenseGradients {
  Tensor weights;  // [d,k]
  Tensor bias;     // [k]
  Tensor input;    // [n,d]
};

// Im2col + GEMM convolution (cross-correlation) with per-filter bias.
Tensor conv2d_forward(const Tensor& x, const Tensor& kernels, const Tensor& bias, std::size_t stride,
                      std::size_t pad);

// Direct six-loop convolution. Kept as the reference path for the fast one.
Tensor conv2d_reference(const Tensor& x, const Tensor& kernels, const Tensor& bias,
                        std::size_t stride, std::size_t pad);

Tensor maxpool2d_forward(const Tensor& x, std::size_t window, std::size_t stride);

Tensor relu(Tensor x);

Tensor dense_forward(const Tensor& x, const DenseParams& p);

// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& logits);

inline constexpr float kProbabilityFloor = 1e-12f;

// Mean of -log(max(p[i, label_i], 1e-12)).
double cross_entropy(const Tensor& probs, std::span<const std::size_t> labels);

// Gradient of mean cross-entropy of softmax(logits) w.r.t. logits:
// (softmax(logits) - one_hot(labels)) / n.
Tensor softmax_xent_grad(const Tensor& logits, std::span<const std::size_t> labels);

DenseGradients dense_backward(const Tensor& x, const DenseParams& p, const Tensor& upstream);

// v <- momentum * v - lr * g; w <- w + v, for weights and bias.
void sgd_update(DenseParams& p, const DenseGradients& g, float lr, float momentum);

}  // namespace disasterlens
