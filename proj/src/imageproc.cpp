#include "sredge/imageproc.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "sredge/errors.hpp"

namespace sredge::imageproc {

Plane rgb_to_y(const ImageBuffer& img) {
  if (img.channels() != 3) {
    throw DimensionError("rgb_to_y: expected 3 channels, got " + std::to_string(img.channels()));
  }
  Plane y(img.height(), img.width());
  const std::size_t n = img.height() * img.width();
  const float* r = img.samples().data();
  const float* g = r + n;
  const float* b = g + n;
  for (std::size_t i = 0; i < n; ++i) y.v[i] = 16.0 + (65.481 * r[i] + 128.553 * g[i] + 24.966 * b[i]);
  return y;
}

Plane luma255(const ImageBuffer& img) {
  if (img.channels() == 3) return rgb_to_y(img);
  if (img.channels() != 1) throw DimensionError("luma255: expected 1 or 3 channels");
  Plane y(img.height(), img.width());
  for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] = 16.0 + 219.0 * img.samples()[i];
  return y;
}

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
  return 0.0;
}

std::vector<ResampleTaps> resample_taps(std::size_t in, std::size_t out) {
  if (in == 0 || out == 0) throw SizeError("resample_taps: extents must be >= 1");
  const double scale = static_cast<double>(out) / static_cast<double>(in);
  const double stretch = std::min(scale, 1.0);
  const double support = 2.0 / stretch;
  std::vector<ResampleTaps> taps(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double center = (static_cast<double>(i) + 0.5) / scale - 0.5;
    const long first = static_cast<long>(std::floor(center - support));
    const long last = static_cast<long>(std::ceil(center + support));
    ResampleTaps& t = taps[i];
    double total = 0.0;
    for (long j = first; j <= last; ++j) {
      const double w = stretch * cubic_kernel(stretch * (center - static_cast<double>(j)));
      if (w == 0.0) continue;
      t.index.push_back(static_cast<std::size_t>(std::clamp(j, 0L, static_cast<long>(in) - 1)));
      t.weight.push_back(w);
      total += w;
    }
    for (double& w : t.weight) w /= total;
  }
  return taps;
}

ImageBuffer bicubic_resize(const ImageBuffer& img, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw SizeError("bicubic_resize: target extent must be >= 1");
  const std::size_t c = img.channels(), h = img.height(), w = img.width();
  const auto tx = resample_taps(w, out_w);
  const auto ty = resample_taps(h, out_h);
  std::vector<double> mid(c * h * out_w);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y) {
      const float* row = img.samples().data() + (ch * h + y) * w;
      for (std::size_t x = 0; x < out_w; ++x) {
        double acc = 0.0;
        for (std::size_t k = 0; k < tx[x].index.size(); ++k) acc += tx[x].weight[k] * row[tx[x].index[k]];
        mid[(ch * h + y) * out_w + x] = acc;
      }
    }
  ImageBuffer out(c, out_h, out_w);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < out_h; ++y)
      for (std::size_t x = 0; x < out_w; ++x) {
        double acc = 0.0;
        for (std::size_t k = 0; k < ty[y].index.size(); ++k) acc += ty[y].weight[k] * mid[(ch * h + ty[y].index[k]) * out_w + x];
        out.at(ch, y, x) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
  return out;
}

ImageBuffer offset_fix(const ImageBuffer& hr) {
  if (hr.height() < 8 || hr.width() < 8) {
    throw SizeError("offset_fix: image " + std::to_string(hr.height()) + "x" + std::to_string(hr.width()) +
                    " is smaller than 8x8");
  }
  const std::size_t h = hr.height() / 8 * 8, w = hr.width() / 8 * 8;
  if (h == hr.height() && w == hr.width()) return hr;
  return bicubic_resize(hr, h, w);
}

DegradedPair degrade_pair(const ImageBuffer& hr, int scale) {
  if (scale != 2 && scale != 4 && scale != 8) throw ParameterError("degrade_pair: scale must be 2, 4 or 8");
  ImageBuffer fixed = offset_fix(hr);
  const auto s = static_cast<std::size_t>(scale);
  ImageBuffer lr = bicubic_resize(fixed, fixed.height() / s, fixed.width() / s);
  return {std::move(lr), std::move(fixed)};
}

namespace {

void require_same_extent(const ImageBuffer& a, const ImageBuffer& b, const char* op) {
  if (a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels()) {
    throw SizeError(std::string(op) + ": images differ in size (" + std::to_string(a.channels()) + "x" +
                    std::to_string(a.height()) + "x" + std::to_string(a.width()) + " vs " + std::to_string(b.channels()) +
                    "x" + std::to_string(b.height()) + "x" + std::to_string(b.width()) + ")");
  }
}

// Valid-mode separable filter: output extent (h - k + 1, w - k + 1).
Plane filter_valid(const Plane& p, const std::vector<double>& k) {
  const std::size_t n = k.size();
  const std::size_t oh = p.height - n + 1, ow = p.width - n + 1;
  Plane mid(p.height, ow);
  for (std::size_t y = 0; y < p.height; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * p(y, x + i);
      mid(y, x) = acc;
    }
  Plane out(oh, ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * mid(y + i, x);
      out(y, x) = acc;
    }
  return out;
}

Plane product(const Plane& a, const Plane& b) {
  Plane out(a.height, a.width);
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

}  // namespace

double psnr(const ImageBuffer& a, const ImageBuffer& b, int scale) {
  require_same_extent(a, b, "psnr");
  const Plane ya = luma255(a), yb = luma255(b);
  const std::size_t crop = static_cast<std::size_t>(std::max(scale, 0));
  if (ya.height <= 2 * crop || ya.width <= 2 * crop) {
    throw SizeError("psnr: border crop of " + std::to_string(crop) + " leaves no pixels");
  }
  double se = 0.0;
  std::size_t count = 0;
  for (std::size_t y = crop; y < ya.height - crop; ++y)
    for (std::size_t x = crop; x < ya.width - crop; ++x) {
      const double d = ya(y, x) - yb(y, x);
      se += d * d;
      ++count;
    }
  const double mse = se / static_cast<double>(count);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_extent(a, b, "ssim");
  constexpr std::size_t win = 11;
  if (a.height() < win || a.width() < win) {
    throw SizeError("ssim: image smaller than the 11x11 window");
  }
  const Plane ya = luma255(a), yb = luma255(b);
  std::vector<double> g(win);
  double total = 0.0;
  for (std::size_t i = 0; i < win; ++i) {
    const double d = static_cast<double>(i) - 5.0;
    g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    total += g[i];
  }
  for (double& v : g) v /= total;

  const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  const Plane mu_a = filter_valid(ya, g), mu_b = filter_valid(yb, g);
  const Plane e_aa = filter_valid(product(ya, ya), g);
  const Plane e_bb = filter_valid(product(yb, yb), g);
  const Plane e_ab = filter_valid(product(ya, yb), g);
  double acc = 0.0;
  for (std::size_t i = 0; i < mu_a.v.size(); ++i) {
    const double ma = mu_a.v[i], mb = mu_b.v[i];
    const double va = e_aa.v[i] - ma * ma;
    const double vb = e_bb.v[i] - mb * mb;
    const double cov = e_ab.v[i] - ma * mb;
    acc += ((2.0 * (ma * mb) + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return acc / static_cast<double>(mu_a.v.size());
}

namespace {

double replicate(const Plane& p, long y, long x) {
  y = std::clamp(y, 0L, static_cast<long>(p.height) - 1);
  x = std::clamp(x, 0L, static_cast<long>(p.width) - 1);
  return p(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
}

}  // namespace

SobelResult sobel_gradients(const Plane& p) {
  SobelResult r{Plane(p.height, p.width), Plane(p.height, p.width), Plane(p.height, p.width)};
  for (std::size_t y = 0; y < p.height; ++y)
    for (std::size_t x = 0; x < p.width; ++x) {
      const long iy = static_cast<long>(y), ix = static_cast<long>(x);
      const double tl = replicate(p, iy - 1, ix - 1), tc = replicate(p, iy - 1, ix), tr = replicate(p, iy - 1, ix + 1);
      const double ml = replicate(p, iy, ix - 1), mr = replicate(p, iy, ix + 1);
      const double bl = replicate(p, iy + 1, ix - 1), bc = replicate(p, iy + 1, ix), br = replicate(p, iy + 1, ix + 1);
      const double gx = (tr + 2.0 * mr + br) - (tl + 2.0 * ml + bl);
      const double gy = (bl + 2.0 * bc + br) - (tl + 2.0 * tc + tr);
      r.gx(y, x) = gx;
      r.gy(y, x) = gy;
      r.magnitude(y, x) = std::sqrt(gx * gx + gy * gy);
    }
  return r;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw ParameterError("gaussian_kernel: sigma must be > 0");
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    const double v = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (double& v : k) v /= total;
  return k;
}

Plane gaussian_blur(const Plane& p, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const long r = static_cast<long>(k.size() / 2);
  Plane mid(p.height, p.width), out(p.height, p.width);
  for (std::size_t y = 0; y < p.height; ++y)
    for (std::size_t x = 0; x < p.width; ++x) {
      double acc = 0.0;
      for (long i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * replicate(p, static_cast<long>(y), static_cast<long>(x) + i);
      mid(y, x) = acc;
    }
  for (std::size_t y = 0; y < p.height; ++y)
    for (std::size_t x = 0; x < p.width; ++x) {
      double acc = 0.0;
      for (long i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * replicate(mid, static_cast<long>(y) + i, static_cast<long>(x));
      out(y, x) = acc;
    }
  return out;
}

namespace {

// Smoothed gradients. The plane is first shifted so its minimum is zero,
// which makes the result exactly invariant to constant offsets.
SobelResult smoothed_gradients(const Plane& plane, double sigma) {
  Plane shifted = plane;
  if (!shifted.v.empty()) {
    const double lo = *std::min_element(shifted.v.begin(), shifted.v.end());
    for (double& v : shifted.v) v -= lo;
  }
  return sobel_gradients(gaussian_blur(shifted, sigma));
}

double max_of(const Plane& p) {
  double m = 0.0;
  for (double v : p.v) m = std::max(m, v);
  return m;
}

// Non-maximum suppression with the gradient direction quantised to 0, 45,
// 90 and 135 degrees. Magnitudes within a relative 1e-9 of each other count
// as equal; on a tie the pixel nearer the origin along the direction wins,
// so a symmetric ridge keeps exactly one pixel.
Plane suppress_non_maxima(const SobelResult& g) {
  const Plane& m = g.magnitude;
  const std::size_t h = m.height, w = m.width;
  const double tie = 1e-9 * max_of(m);
  constexpr double tan22 = 0.41421356237309503;  // tan(22.5 deg)
  constexpr double tan67 = 2.4142135623730949;   // tan(67.5 deg)
  auto mag = [&](long y, long x) {
    if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return 0.0;
    return m(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  };
  Plane out(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double v = m(y, x);
      if (v <= 0.0) continue;
      const double gx = g.gx(y, x), gy = g.gy(y, x);
      const double ax = std::abs(gx), ay = std::abs(gy);
      const long iy = static_cast<long>(y), ix = static_cast<long>(x);
      double before, after;
      if (ay <= ax * tan22) {
        before = mag(iy, ix - 1);
        after = mag(iy, ix + 1);
      } else if (ay >= ax * tan67) {
        before = mag(iy - 1, ix);
        after = mag(iy + 1, ix);
      } else if (gx * gy > 0.0) {
        before = mag(iy - 1, ix - 1);
        after = mag(iy + 1, ix + 1);
      } else {
        before = mag(iy - 1, ix + 1);
        after = mag(iy + 1, ix - 1);
      }
      if (v > before + tie && v >= after - tie) out(y, x) = v;
    }
  return out;
}

Plane hysteresis(const Plane& nms, double t_low, double t_high) {
  const std::size_t h = nms.height, w = nms.width;
  Plane edges(h, w);
  std::deque<std::pair<std::size_t, std::size_t>> queue;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      if (nms(y, x) >= t_high) {
        edges(y, x) = 1.0;
        queue.emplace_back(y, x);
      }
  while (!queue.empty()) {
    const auto [y, x] = queue.front();
    queue.pop_front();
    for (long dy = -1; dy <= 1; ++dy)
      for (long dx = -1; dx <= 1; ++dx) {
        const long ny = static_cast<long>(y) + dy, nx = static_cast<long>(x) + dx;
        if (ny < 0 || nx < 0 || ny >= static_cast<long>(h) || nx >= static_cast<long>(w)) continue;
        const auto uy = static_cast<std::size_t>(ny), ux = static_cast<std::size_t>(nx);
        if (edges(uy, ux) == 0.0 && nms(uy, ux) >= t_low) {
          edges(uy, ux) = 1.0;
          queue.emplace_back(uy, ux);
        }
      }
  }
  return edges;
}

void check_canny_params(double sigma, double t_low, double t_high) {
  if (!(sigma > 0.0)) throw ParameterError("canny: sigma must be > 0");
  if (!(t_low > 0.0 && t_low < t_high)) {
    throw ParameterError("canny: thresholds must satisfy 0 < t_low < t_high (got " + std::to_string(t_low) + ", " +
                         std::to_string(t_high) + ")");
  }
}

}  // namespace

Plane canny(const Plane& plane, double sigma, double t_low, double t_high) {
  check_canny_params(sigma, t_low, t_high);
  return hysteresis(suppress_non_maxima(smoothed_gradients(plane, sigma)), t_low, t_high);
}

Plane canny_relative(const Plane& plane, double sigma, double low_frac, double high_frac) {
  check_canny_params(sigma, low_frac, high_frac);
  const SobelResult g = smoothed_gradients(plane, sigma);
  const double peak = max_of(g.magnitude);
  if (peak <= 0.0) return Plane(plane.height, plane.width);
  return hysteresis(suppress_non_maxima(g), low_frac * peak, high_frac * peak);
}

}  // namespace sredge::imageproc
