#include "disasterlens/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "disasterlens/errors.hpp"
#include "disasterlens/parallel.hpp"

namespace disasterlens {

namespace {

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

class PpmHeaderReader {
 public:
  explicit PpmHeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t number() {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_++] - '0');
      if (++digits > 9) throw FormatError("PPM: header value too large");
    }
    if (digits == 0) throw FormatError("PPM: corrupt header");
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw FormatError("PPM: corrupt header");
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
};

Tensor decode_ppm(std::span<const std::uint8_t> bytes) {
  PpmHeaderReader header(bytes);
  const auto width = header.number();
  const auto height = header.number();
  const auto maxval = header.number();
  if (width == 0 || height == 0) throw FormatError("PPM: zero dimension");
  if (maxval != 255) throw FormatError("PPM: unsupported maxval " + std::to_string(maxval) + " (only 255)");
  const auto offset = header.raster_offset();
  const std::size_t plane = width * height;
  if (bytes.size() < offset || bytes.size() - offset < 3 * plane) throw FormatError("PPM: truncated pixel data");
  Tensor img({3, height, width});
  const std::uint8_t* px = bytes.data() + offset;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) img[c * plane + i] = px[3 * i + c];
  return img;
}

Tensor decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("PNG: corrupt stream: " + msg);
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw FormatError("PNG: unsupported format: only 8-bit channels are accepted");
  }
  // RGBA keeps color values untouched by alpha compositing; alpha is dropped below.
  image.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("PNG: corrupt stream: " + msg);
  }
  const std::size_t width = image.width, height = image.height, plane = width * height;
  Tensor img({3, height, width});
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) img[c * plane + i] = buffer[4 * i + c];
  return img;
}

}  // namespace

Tensor decode_image_bytes(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSignature, 8) == 0) return decode_png(bytes);
  throw FormatError("unsupported image format (expected PPM P6 or PNG)");
}

Tensor decode_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_image_bytes(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("encode_ppm: expected [3,h,w], got " + shape_string(image.shape()));
  const std::size_t h = image.dim(1), w = image.dim(2), plane = h * w;
  const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + 3 * plane);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(std::round(image[c * plane + i]), 0.0f, 255.0f);
      out.push_back(static_cast<std::uint8_t>(v));
    }
  return out;
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  const auto bytes = encode_ppm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  if (image.rank() != 3) throw ShapeError("resize: expected [c,h,w], got " + shape_string(image.shape()));
  if (out_h == 0 || out_w == 0) throw ShapeError("resize: target must be positive");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h == out_h && w == out_w) return image;

  struct Tap {
    std::size_t lo, hi;
    float frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
      double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto lo = static_cast<std::size_t>(std::floor(src));
      t[i] = {lo, std::min(lo + 1, in - 1), static_cast<float>(src - static_cast<double>(lo))};
    }
    return t;
  };
  const auto ty = taps(h, out_h);
  const auto tx = taps(w, out_w);
  Tensor out({c, out_h, out_w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* src = image.raw() + ch * h * w;
    float* dst = out.raw() + ch * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const float* r0 = src + ty[y].lo * w;
      const float* r1 = src + ty[y].hi * w;
      for (std::size_t x = 0; x < out_w; ++x) {
        // Lerp form so a constant neighbourhood yields exactly that constant.
        const auto& t = tx[x];
        const float top = r0[t.lo] + t.frac * (r0[t.hi] - r0[t.lo]);
        const float bottom = r1[t.lo] + t.frac * (r1[t.hi] - r1[t.lo]);
        dst[y * out_w + x] = top + ty[y].frac * (bottom - top);
      }
    }
  }
  return out;
}

Tensor preprocess(const Tensor& image, std::size_t target, const std::array<float, 3>& means) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("preprocess: expected [3,h,w], got " + shape_string(image.shape()));
  Tensor out = resize_bilinear(image, target, target);
  const std::size_t plane = target * target;
  for (std::size_t c = 0; c < 3; ++c) {
    if (means[c] == 0.0f) continue;
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] -= means[c];
  }
  return out;
}

std::vector<Example> load_examples(std::span<const Sample> samples, std::size_t target,
                                   const std::array<float, 3>& means, std::size_t threads) {
  std::vector<Example> out(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    out[i] = Example{samples[i].path, class_code(samples[i].label), preprocess(decode_image(samples[i].path), target, means)};
  });
  return out;
}

Tensor stack_images(std::span<const Example> examples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ShapeError("stack_images: no images");
  const auto& first = examples[indices[0]].image;
  const std::size_t per = first.size();
  Tensor::Shape shape{indices.size()};
  shape.insert(shape.end(), first.shape().begin(), first.shape().end());
  Tensor out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& img = examples[indices[i]].image;
    if (img.shape() != first.shape()) throw ShapeError("stack_images: mixed image shapes");
    std::memcpy(out.raw() + i * per, img.raw(), per * sizeof(float));
  }
  return out;
}

Tensor stack_images(std::span<const Tensor> images) {
  if (images.empty()) throw ShapeError("stack_images: no images");
  const std::size_t per = images[0].size();
  Tensor::Shape shape{images.size()};
  shape.insert(shape.end(), images[0].shape().begin(), images[0].shape().end());
  Tensor out(shape);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != images[0].shape()) throw ShapeError("stack_images: mixed image shapes");
    std::memcpy(out.raw() + i * per, images[i].raw(), per * sizeof(float));
  }
  return out;
}

}  // namespace disasterlens
