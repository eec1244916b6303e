#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sredge/image.hpp"
#include "sredge/params.hpp"
#include "sredge/tensor.hpp"

namespace sredge::test {

/// 64x64 RGB with band-limited sinusoidal texture, a hard disk and a dark
/// rectangle; bicubic x2 of its LR scores about 31.7 dB.
ImageBuffer textured_image(std::size_t size = 64, std::uint64_t seed = 7);

/// Flat background with three random filled circles or squares.
ImageBuffer shapes_image(std::uint64_t seed, std::size_t size = 64);

ImageBuffer random_image(std::size_t channels, std::size_t h, std::size_t w, Rng& rng, double lo = 0.0, double hi = 1.0);
Tensor<double> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0);

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

/// Runs a shell command and returns its exit status (-1 if it did not exit).
int run_command(const std::string& cmd);
std::string quote(const std::filesystem::path& p);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p);
void write_text(const std::filesystem::path& p, const std::string& text);

}  // namespace sredge::test
