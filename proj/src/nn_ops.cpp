#include "disasterlens/nn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "disasterlens/errors.hpp"

namespace disasterlens {

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w, filters, kernel, ho, wo;
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& kernels, const Tensor& bias,
                           std::size_t stride, std::size_t pad) {
  if (x.rank() != 4) throw ShapeError("conv2d: input must be [n,c,h,w], got " + shape_string(x.shape()));
  if (kernels.rank() != 4 || kernels.dim(2) != kernels.dim(3)) {
    throw ShapeError("conv2d: kernels must be [f,c,k,k], got " + shape_string(kernels.shape()));
  }
  if (kernels.dim(1) != x.dim(1)) {
    throw ShapeError("conv2d: kernel channels " + std::to_string(kernels.dim(1)) +
                     " != input channels " + std::to_string(x.dim(1)));
  }
  if (bias.size() != kernels.dim(0)) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias.size()) + " != filters " +
                     std::to_string(kernels.dim(0)));
  }
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), kernels.dim(0), kernels.dim(2), 0, 0};
  g.ho = window_output_size(g.h, g.kernel, stride, pad);
  g.wo = window_output_size(g.w, g.kernel, stride, pad);
  return g;
}

void check_labels(std::span<const std::size_t> labels, std::size_t n, std::size_t k) {
  if (labels.size() != n) {
    throw LabelError("expected " + std::to_string(n) + " labels, got " + std::to_string(labels.size()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= k) {
      throw LabelError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                       " outside [0," + std::to_string(k) + ")");
    }
  }
}

}  // namespace

DenseParams::DenseParams(Tensor w, Tensor b) : weights(std::move(w)), bias(std::move(b)) {
  if (weights.rank() != 2 || bias.size() != weights.dim(1)) {
    throw ShapeError("dense params: weights " + shape_string(weights.shape()) + " and bias " +
                     shape_string(bias.shape()) + " disagree");
  }
  weight_velocity = Tensor(weights.shape(), 0.0f);
  bias_velocity = Tensor(bias.shape(), 0.0f);
}

DenseParams DenseParams::zeros(std::size_t in_features, std::size_t out_features) {
  return DenseParams(Tensor({in_features, out_features}, 0.0f), Tensor({out_features}, 0.0f));
}

Tensor conv2d_forward(const Tensor& x, const Tensor& kernels, const Tensor& bias, std::size_t stride,
                      std::size_t pad) {
  const auto g = conv_geometry(x, kernels, bias, stride, pad);
  const std::size_t plane = g.ho * g.wo;
  const std::size_t image_size = g.c * g.h * g.w;
  const Tensor kmat = kernels.reshaped({g.filters, g.c * g.kernel * g.kernel});
  Tensor out({g.n, g.filters, g.ho, g.wo});
  // One image at a time bounds the im2col buffer; for a single image the GEMM
  // result [f, ho*wo] is already in output layout.
  for (std::size_t img = 0; img < g.n; ++img) {
    Tensor single({1, g.c, g.h, g.w},
                  std::vector<float>(x.raw() + img * image_size, x.raw() + (img + 1) * image_size));
    const Tensor cols = im2col(single, g.kernel, stride, pad);
    const Tensor prod = matmul(kmat, cols);
    float* dst = out.raw() + img * g.filters * plane;
    for (std::size_t f = 0; f < g.filters; ++f) {
      const float b = bias[f];
      const float* src = prod.raw() + f * plane;
      for (std::size_t j = 0; j < plane; ++j) dst[f * plane + j] = src[j] + b;
    }
  }
  return out;
}

Tensor conv2d_reference(const Tensor& x, const Tensor& kernels, const Tensor& bias,
                        std::size_t stride, std::size_t pad) {
  const auto g = conv_geometry(x, kernels, bias, stride, pad);
  Tensor out({g.n, g.filters, g.ho, g.wo});
  for (std::size_t img = 0; img < g.n; ++img)
    for (std::size_t f = 0; f < g.filters; ++f)
      for (std::size_t oy = 0; oy < g.ho; ++oy)
        for (std::size_t ox = 0; ox < g.wo; ++ox) {
          double acc = 0.0;
          for (std::size_t ch = 0; ch < g.c; ++ch)
            for (std::size_t ky = 0; ky < g.kernel; ++ky)
              for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.h) ||
                    ix >= static_cast<std::ptrdiff_t>(g.w))
                  continue;
                acc += static_cast<double>(x.at(img, ch, iy, ix)) * kernels.at(f, ch, ky, kx);
              }
          out.at(img, f, oy, ox) = static_cast<float>(acc + bias[f]);
        }
  return out;
}

Tensor maxpool2d_forward(const Tensor& x, std::size_t window, std::size_t stride) {
  if (x.rank() != 4) throw ShapeError("maxpool2d: input must be [n,c,h,w], got " + shape_string(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = window_output_size(h, window, stride, 0);
  const std::size_t wo = window_output_size(w, window, stride, 0);
  Tensor out({n, c, ho, wo});
  for (std::size_t img = 0; img < n; ++img)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          float m = -std::numeric_limits<float>::infinity();
          for (std::size_t wy = 0; wy < window; ++wy)
            for (std::size_t wx = 0; wx < window; ++wx)
              m = std::max(m, x.at(img, ch, oy * stride + wy, ox * stride + wx));
          out.at(img, ch, oy, ox) = m;
        }
  return out;
}

Tensor relu(Tensor x) {
  for (auto& v : x.data()) v = v > 0.0f ? v : 0.0f;
  return x;
}

Tensor dense_forward(const Tensor& x, const DenseParams& p) {
  if (x.rank() != 2 || x.dim(1) != p.in_features()) {
    throw ShapeError("dense: input " + shape_string(x.shape()) + " vs weights " +
                     shape_string(p.weights.shape()));
  }
  Tensor y = matmul(x, p.weights);
  const std::size_t k = p.out_features();
  for (std::size_t i = 0; i < y.dim(0); ++i)
    for (std::size_t j = 0; j < k; ++j) y.at(i, j) += p.bias[j];
  return y;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax: expected [n,k], got " + shape_string(logits.shape()));
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    float m = logits.at(i, 0);
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, logits.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(logits.at(i, j) - m));
    for (std::size_t j = 0; j < k; ++j) {
      out.at(i, j) = static_cast<float>(std::exp(static_cast<double>(logits.at(i, j) - m)) / sum);
    }
  }
  return out;
}

double cross_entropy(const Tensor& probs, std::span<const std::size_t> labels) {
  if (probs.rank() != 2) throw ShapeError("cross_entropy: expected [n,k], got " + shape_string(probs.shape()));
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  check_labels(labels, n, k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const float p = std::max(probs.at(i, labels[i]), kProbabilityFloor);
    total -= std::log(static_cast<double>(p));
  }
  return total / static_cast<double>(n);
}

Tensor softmax_xent_grad(const Tensor& logits, std::span<const std::size_t> labels) {
  Tensor g = softmax(logits);
  const std::size_t n = g.dim(0), k = g.dim(1);
  check_labels(labels, n, k);
  const float inv_n = 1.0f / static_cast<float>(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.at(i, labels[i]) -= 1.0f;
    for (std::size_t j = 0; j < k; ++j) g.at(i, j) *= inv_n;
  }
  return g;
}

DenseGradients dense_backward(const Tensor& x, const DenseParams& p, const Tensor& upstream) {
  if (x.rank() != 2 || upstream.rank() != 2 || x.dim(0) != upstream.dim(0) ||
      x.dim(1) != p.in_features() || upstream.dim(1) != p.out_features()) {
    throw ShapeError("dense_backward: x " + shape_string(x.shape()) + ", weights " +
                     shape_string(p.weights.shape()) + ", upstream " + shape_string(upstream.shape()));
  }
  DenseGradients g;
  g.weights = matmul(transpose(x), upstream);
  g.bias = Tensor({p.out_features()}, 0.0f);
  for (std::size_t i = 0; i < upstream.dim(0); ++i)
    for (std::size_t j = 0; j < upstream.dim(1); ++j) g.bias[j] += upstream.at(i, j);
  g.input = matmul(upstream, transpose(p.weights));
  return g;
}

void sgd_update(DenseParams& p, const DenseGradients& g, float lr, float momentum) {
  if (g.weights.shape() != p.weights.shape() || g.bias.shape() != p.bias.shape()) {
    throw ShapeError("sgd_update: gradient shapes do not match parameters");
  }
  auto step = [&](Tensor& w, Tensor& v, const Tensor& grad) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum * v[i] - lr * grad[i];
      // Skipping zero steps keeps a -0.0 weight bit-identical.
      if (v[i] != 0.0f) w[i] += v[i];
    }
  };
  step(p.weights, p.weight_velocity, g.weights);
  step(p.bias, p.bias_velocity, g.bias);
}

}  // namespace disasterlens
