#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "sredge/tensor.hpp"

namespace sredge {

/// Planar float image, 1 or 3 channels, samples nominally in [0,1].
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(std::size_t channels, std::size_t height, std::size_t width, float fill = 0.0f);
  ImageBuffer(std::size_t channels, std::size_t height, std::size_t width, std::vector<float> samples);

  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  bool empty() const { return samples_.empty(); }

  float& at(std::size_t c, std::size_t y, std::size_t x) { return samples_[(c * height_ + y) * width_ + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return samples_[(c * height_ + y) * width_ + x]; }

  std::vector<float>& samples() { return samples_; }
  const std::vector<float>& samples() const { return samples_; }

  void clamp01();
  bool operator==(const ImageBuffer&) const = default;

 private:
  std::size_t channels_ = 0, height_ = 0, width_ = 0;
  std::vector<float> samples_;
};

/// Single-plane edge probability map.
using EdgeMap = ImageBuffer;

/// Double-precision single plane used by metrics and classical detectors.
struct Plane {
  std::size_t height = 0, width = 0;
  std::vector<double> v;

  Plane() = default;
  Plane(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), v(h * w, fill) {}
  double& operator()(std::size_t y, std::size_t x) { return v[y * width + x]; }
  double operator()(std::size_t y, std::size_t x) const { return v[y * width + x]; }
  bool operator==(const Plane&) const = default;
};

Plane plane_from(const ImageBuffer& img, std::size_t channel);
ImageBuffer image_from(const Plane& p);

/// (1, C, H, W) tensor view of one image; `batch` stacks several of equal size.
template <typename T>
Tensor<T> to_tensor(const ImageBuffer& img);
template <typename T>
Tensor<T> batch_to_tensor(const std::vector<ImageBuffer>& imgs);
/// Sample `n` of an (N, C, H, W) tensor; no clamping.
template <typename T>
ImageBuffer from_tensor(const Tensor<T>& t, std::size_t n = 0);

/// Round-half-up to 8 bits and back: what a PNG round trip does to samples.
ImageBuffer quantize8(const ImageBuffer& img);

/// 8-bit PNG, grey or RGB. Alpha is dropped with a warning on stderr;
/// palette and sub-byte grey are expanded, 16-bit is reduced to 8.
ImageBuffer load_png(const std::filesystem::path& path);
/// Samples are clamped to [0,1] and stored as round(255 * v + 0.5) floored.
void save_png(const ImageBuffer& img, const std::filesystem::path& path);

}  // namespace sredge
