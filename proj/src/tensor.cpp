#include "disasterlens/tensor.hpp"

#include <cstring>

#include "disasterlens/errors.hpp"

namespace disasterlens {

namespace {

void check_shape(const Tensor::Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw ShapeError("invalid shape " + shape_string(shape) + ": zero dimension");
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

}  // namespace

std::string shape_string(const Tensor::Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_numel(const Tensor::Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
  }
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  check_shape(shape);
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

bool Tensor::bit_equal(const Tensor& other) const noexcept {
  return shape_ == other.shape_ &&
         (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
}

Tensor tensor_create(Tensor::Shape shape, float fill) { return Tensor(std::move(shape), fill); }

Tensor identity(std::size_t n) {
  Tensor t({n, n}, 0.0f);
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0f;
  return t;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  Tensor t({cols, rows});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  Tensor c({m, n}, 0.0f);
  const float* pa = a.raw();
  const float* pb = b.raw();
  float* pc = c.raw();
  // i-p-j order: each c[i,j] still accumulates over p in ascending order, and the
  // innermost loop runs over contiguous rows of b and c.
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = pa[i * k + p];
      const float* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor pad2d(const Tensor& x, std::size_t pad) {
  require_rank(x, 4, "pad2d");
  if (pad == 0) return x;
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ph = h + 2 * pad, pw = w + 2 * pad;
  Tensor out({n, c, ph, pw}, 0.0f);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y) {
        const float* src = x.raw() + ((i * c + ch) * h + y) * w;
        float* dst = &out.at(i, ch, y + pad, pad);
        std::memcpy(dst, src, w * sizeof(float));
      }
  return out;
}

std::size_t window_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t pad) {
  if (kernel == 0 || stride == 0) throw ShapeError("kernel and stride must be positive");
  const std::size_t padded = in + 2 * pad;
  if (padded < kernel) {
    throw ShapeError("window " + std::to_string(kernel) + " larger than padded input " +
                     std::to_string(padded));
  }
  if ((padded - kernel) % stride != 0) {
    throw ShapeError("non-integral output size: (" + std::to_string(in) + " + 2*" +
                     std::to_string(pad) + " - " + std::to_string(kernel) + ") / " +
                     std::to_string(stride));
  }
  return (padded - kernel) / stride + 1;
}

Tensor im2col(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t pad) {
  require_rank(x, 4, "im2col");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = window_output_size(h, kernel, stride, pad);
  const std::size_t wo = window_output_size(w, kernel, stride, pad);
  const std::size_t cols = n * ho * wo;
  Tensor out({c * kernel * kernel, cols}, 0.0f);
  float* po = out.raw();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t ky = 0; ky < kernel; ++ky)
      for (std::size_t kx = 0; kx < kernel; ++kx) {
        float* row = po + ((ch * kernel + ky) * kernel + kx) * cols;
        for (std::size_t img = 0; img < n; ++img)
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                      static_cast<std::ptrdiff_t>(pad);
            float* dst = row + (img * ho + oy) * wo;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            const float* src = x.raw() + ((img * c + ch) * h + static_cast<std::size_t>(iy)) * w;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                        static_cast<std::ptrdiff_t>(pad);
              if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[ox] = src[ix];
            }
          }
      }
  return out;
}

std::vector<std::size_t> argmax_rows(const Tensor& x) {
  require_rank(x, 2, "argmax_rows");
  const std::size_t n = x.dim(0), k = x.dim(1);
  std::vector<std::size_t> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (x.at(i, j) > x.at(i, best)) best = j;
    }
    out[i] = best;
  }
  return out;
}

}  // namespace disasterlens
