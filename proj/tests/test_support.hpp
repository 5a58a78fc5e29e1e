#pragma once

// Test-only helpers and independent oracles. Nothing here calls into the code
// paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "disasterlens/tensor.hpp"

namespace disasterlens::testing {

inline Tensor random_tensor(Tensor::Shape shape, std::mt19937& gen, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(gen);
  return t;
}

// max |a - b| / max |b|: error relative to the scale of the reference.
inline double max_relative_error(std::span<const float> actual, std::span<const double> reference) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(actual[i]) - reference[i]));
    scale = std::max(scale, std::abs(reference[i]));
  }
  return scale == 0.0 ? diff : diff / scale;
}

inline double max_relative_error(const Tensor& actual, const Tensor& reference) {
  std::vector<double> ref(reference.data().begin(), reference.data().end());
  return max_relative_error(actual.data(), ref);
}

// c[i,j] = sum_p a[i,p] b[p,j] in double.
inline std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += static_cast<double>(a.raw()[i * k + p]) * b.raw()[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

// Six nested loops over (image, filter, out y, out x) x (channel, ky, kx), in double.
inline std::vector<double> naive_conv(const Tensor& x, const Tensor& kernels, const Tensor& bias, std::size_t stride,
                                      std::size_t pad, std::size_t& ho, std::size_t& wo) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t f = kernels.dim(0), k = kernels.dim(2);
  ho = (h + 2 * pad - k) / stride + 1;
  wo = (w + 2 * pad - k) / stride + 1;
  std::vector<double> out(n * f * ho * wo, 0.0);
  auto xv = [&](std::size_t i, std::size_t ch, long y, long xx) -> double {
    if (y < 0 || xx < 0 || y >= static_cast<long>(h) || xx >= static_cast<long>(w)) return 0.0;
    return x.raw()[((i * c + ch) * h + y) * w + xx];
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t fi = 0; fi < f; ++fi)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double s = bias.raw()[fi];
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long y = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                const long xx = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                s += xv(i, ch, y, xx) * kernels.raw()[((fi * c + ch) * k + ky) * k + kx];
              }
          out[((i * f + fi) * ho + oy) * wo + ox] = s;
        }
  return out;
}

// Mean softmax cross-entropy of logits = x W + b, entirely in double.
inline double head_loss(const std::vector<double>& x, const std::vector<double>& w, const std::vector<double>& b,
                        std::size_t n, std::size_t d, std::size_t k, const std::vector<std::size_t>& labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> z(k);
    for (std::size_t j = 0; j < k; ++j) {
      z[j] = b[j];
      for (std::size_t p = 0; p < d; ++p) z[j] += x[i * d + p] * w[p * k + j];
    }
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    total -= (z[labels[i]] - m) - std::log(s);
  }
  return total / static_cast<double>(n);
}

// Central differences of f over every element of `params`, step h.
template <class F>
std::vector<double> central_differences(std::vector<double>& params, double h, F&& f) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = f();
    params[i] = saved - h;
    const double down = f();
    params[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline std::vector<double> to_double(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 gen{std::random_device{}()};
    path_ = std::filesystem::temp_directory_path() / ("disasterlens_" + tag + "_" + std::to_string(gen()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace disasterlens::testing
