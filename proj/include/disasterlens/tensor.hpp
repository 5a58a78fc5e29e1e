#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace disasterlens {

// Dense row-major float32 tensor. Image batches use (batch, channel, height, width).
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  // An empty tensor with no shape. Only useful as a placeholder.
  Tensor() = default;

  // Throws ShapeError if any dimension is zero or the shape is empty.
  Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  float* raw() noexcept { return data_.data(); }
  const float* raw() const noexcept { return data_.data(); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  float& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  float at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  float& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  float at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  // Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  // Shape and every bit of data equal (so NaN payloads compare equal to themselves).
  bool bit_equal(const Tensor& other) const noexcept;

 private:
  Shape shape_;
  std::vector<float> data_;
};

std::string shape_string(const Tensor::Shape& shape);
std::size_t shape_numel(const Tensor::Shape& shape);

Tensor tensor_create(Tensor::Shape shape, float fill);
Tensor identity(std::size_t n);
Tensor transpose(const Tensor& a);

// c[i,j] = sum_p a[i,p] * b[p,j] in float32, p ascending for every output element.
Tensor matmul(const Tensor& a, const Tensor& b);

// Zero border of width `pad` around each (n, c) plane.
Tensor pad2d(const Tensor& x, std::size_t pad);

// Output length of a sliding window; throws ShapeError when the window does not
// tile the padded input exactly.
std::size_t window_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t pad);

// Lowers x [n,c,h,w] to [c*k*k, n*h_out*w_out]. Row index is (channel, patch row,
// patch col); column index is (image, out row, out col).
Tensor im2col(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t pad);

// Per-row argmax of a rank-2 tensor; ties resolve to the lowest index.
std::vector<std::size_t> argmax_rows(const Tensor& x);

}  // namespace disasterlens
