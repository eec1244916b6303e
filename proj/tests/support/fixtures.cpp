#include "fixtures.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include <unistd.h>

namespace sredge::test {

namespace fs = std::filesystem;

ImageBuffer textured_image(std::size_t size, std::uint64_t seed) {
  Rng g(seed);
  constexpr int kWaves = 12;
  double fx[kWaves], fy[kWaves], ph[kWaves], am[kWaves];
  for (int k = 0; k < kWaves; ++k) {
    fx[k] = g.uniform(-1.3, 1.3);
    fy[k] = g.uniform(-1.3, 1.3);
    ph[k] = g.uniform(0.0, 6.28);
    am[k] = g.uniform(0.02, 0.06);
  }
  const double s = static_cast<double>(size) / 64.0;
  ImageBuffer img(3, size, size);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double xd = static_cast<double>(x), yd = static_cast<double>(y);
        double v = 0.45 + 0.05 * static_cast<double>(c);
        for (int k = 0; k < kWaves; ++k) v += am[k] * std::sin(fx[k] * xd + fy[k] * yd + ph[k] + 0.5 * static_cast<double>(c) * k);
        if (std::hypot(xd - 30.0 * s, yd - 34.0 * s) < 14.0 * s) v += 0.2;
        if (xd > 44.0 * s && yd > 8.0 * s && yd < 28.0 * s) v -= 0.25;
        img.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  return quantize8(img);
}

ImageBuffer shapes_image(std::uint64_t seed, std::size_t size) {
  Rng g(seed);
  const double s = static_cast<double>(size) / 64.0;
  ImageBuffer img(3, size, size);
  for (std::size_t c = 0; c < 3; ++c) {
    const float bg = static_cast<float>(g.uniform(0.1, 0.4));
    for (std::size_t i = 0; i < size * size; ++i) img.samples()[c * size * size + i] = bg;
  }
  for (int k = 0; k < 3; ++k) {
    const double cx = g.uniform(12, 52) * s, cy = g.uniform(12, 52) * s, r = g.uniform(6, 12) * s;
    float col[3];
    for (float& v : col) v = static_cast<float>(g.uniform(0.5, 0.95));
    const bool circle = g.below(2) == 1;
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
        const bool in = circle ? std::hypot(dx, dy) < r : (std::abs(dx) < r && std::abs(dy) < r);
        if (in)
          for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = col[c];
      }
  }
  return quantize8(img);
}

ImageBuffer random_image(std::size_t channels, std::size_t h, std::size_t w, Rng& rng, double lo, double hi) {
  ImageBuffer img(channels, h, w);
  for (float& v : img.samples()) v = static_cast<float>(rng.uniform(lo, hi));
  return img;
}

Tensor<double> random_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
  Tensor<double> t(shape);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("sredge_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter.fetch_add(1)));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

std::string quote(const fs::path& p) {
  std::string out = "'";
  for (char c : p.string()) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

}  // namespace sredge::test
