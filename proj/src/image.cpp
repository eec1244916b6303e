#include "sredge/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <memory>

#include "sredge/errors.hpp"

namespace sredge {

ImageBuffer::ImageBuffer(std::size_t channels, std::size_t height, std::size_t width, float fill)
    : channels_(channels), height_(height), width_(width), samples_(channels * height * width, fill) {}

ImageBuffer::ImageBuffer(std::size_t channels, std::size_t height, std::size_t width, std::vector<float> samples)
    : channels_(channels), height_(height), width_(width), samples_(std::move(samples)) {
  if (samples_.size() != channels * height * width) {
    throw DimensionError("ImageBuffer: " + std::to_string(samples_.size()) + " samples for " + std::to_string(channels) +
                         "x" + std::to_string(height) + "x" + std::to_string(width));
  }
}

void ImageBuffer::clamp01() {
  for (float& v : samples_) v = std::clamp(v, 0.0f, 1.0f);
}

Plane plane_from(const ImageBuffer& img, std::size_t channel) {
  if (channel >= img.channels()) throw DimensionError("plane_from: channel " + std::to_string(channel) + " out of range");
  Plane p(img.height(), img.width());
  const float* src = img.samples().data() + channel * img.height() * img.width();
  for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = src[i];
  return p;
}

ImageBuffer image_from(const Plane& p) {
  ImageBuffer img(1, p.height, p.width);
  for (std::size_t i = 0; i < p.v.size(); ++i) img.samples()[i] = static_cast<float>(p.v[i]);
  return img;
}

template <typename T>
Tensor<T> to_tensor(const ImageBuffer& img) {
  std::vector<T> v(img.samples().begin(), img.samples().end());
  return Tensor<T>(Shape{1, img.channels(), img.height(), img.width()}, std::move(v));
}

template <typename T>
Tensor<T> batch_to_tensor(const std::vector<ImageBuffer>& imgs) {
  if (imgs.empty()) throw DimensionError("batch_to_tensor: empty batch");
  const ImageBuffer& f = imgs.front();
  std::vector<T> v;
  v.reserve(imgs.size() * f.samples().size());
  for (const ImageBuffer& img : imgs) {
    if (img.channels() != f.channels() || img.height() != f.height() || img.width() != f.width()) {
      throw DimensionError("batch_to_tensor: images in a batch must share (C,H,W)");
    }
    v.insert(v.end(), img.samples().begin(), img.samples().end());
  }
  return Tensor<T>(Shape{imgs.size(), f.channels(), f.height(), f.width()}, std::move(v));
}

template <typename T>
ImageBuffer from_tensor(const Tensor<T>& t, std::size_t n) {
  if (t.rank() != 4 || n >= t.dim(0)) throw DimensionError("from_tensor: need NCHW tensor, got " + shape_str(t.shape()));
  const std::size_t c = t.dim(1), h = t.dim(2), w = t.dim(3);
  std::vector<float> v(c * h * w);
  const T* src = t.data() + n * c * h * w;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(src[i]);
  return ImageBuffer(c, h, w, std::move(v));
}

template Tensor<float> to_tensor<float>(const ImageBuffer&);
template Tensor<double> to_tensor<double>(const ImageBuffer&);
template Tensor<float> batch_to_tensor<float>(const std::vector<ImageBuffer>&);
template Tensor<double> batch_to_tensor<double>(const std::vector<ImageBuffer>&);
template ImageBuffer from_tensor<float>(const Tensor<float>&, std::size_t);
template ImageBuffer from_tensor<double>(const Tensor<double>&, std::size_t);

namespace {

std::uint8_t to_byte(float v) {
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

}  // namespace

ImageBuffer quantize8(const ImageBuffer& img) {
  ImageBuffer out = img;
  for (float& v : out.samples()) v = static_cast<float>(to_byte(v)) / 255.0f;
  return out;
}

ImageBuffer load_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError(path.string() + ": not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + ": libpng initialisation failed");
  }
  std::vector<png_bytep> rows;
  std::vector<png_byte> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + ": corrupt PNG data");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  const bool has_alpha = (color & PNG_COLOR_MASK_ALPHA) != 0 || png_get_valid(png, info, PNG_INFO_tRNS);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (has_alpha) {
    png_set_strip_alpha(png);
    std::cerr << "warning: " << path.string() << ": alpha channel dropped\n";
  }
  png_read_update_info(png, info);
  const std::size_t channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + ": unsupported channel count " + std::to_string(channels));
  }
  const std::size_t stride = png_get_rowbytes(png, info);
  pixels.resize(stride * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  ImageBuffer img(channels, height, width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < channels; ++c)
        img.at(c, y, x) = static_cast<float>(pixels[y * stride + x * channels + c]) / 255.0f;
  return img;
}

void save_png(const ImageBuffer& img, const std::filesystem::path& path) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw FormatError("save_png: cannot store " + std::to_string(img.channels()) + " channels");
  }
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("save_png: libpng initialisation failed");
  }
  const std::size_t c = img.channels(), h = img.height(), w = img.width();
  std::vector<png_byte> pixels(c * h * w);
  std::vector<png_bytep> rows(h);
  for (std::size_t y = 0; y < h; ++y) {
    rows[y] = pixels.data() + y * w * c;
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < c; ++k) pixels[(y * w + x) * c + k] = to_byte(img.at(k, y, x));
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("save_png: write failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace sredge
