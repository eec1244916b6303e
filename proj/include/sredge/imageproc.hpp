#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "sredge/image.hpp"

namespace sredge::imageproc {

/// BT.601 studio-swing luma on the 0-255 scale:
/// Y = 16 + 65.481 R + 128.553 G + 24.966 B with R,G,B in [0,1].
Plane rgb_to_y(const ImageBuffer& img);

/// Keys cubic convolution kernel, a = -0.5.
double cubic_kernel(double x);

/// Taps of one output sample along one axis of a resize.
struct ResampleTaps {
  std::vector<std::size_t> index;  // clamped source indices
  std::vector<double> weight;      // sums to 1
};

/// Per-output-sample taps for resizing an axis of length `in` to `out`.
/// Downscaling widens the kernel by in/out (antialiasing); weights are
/// renormalised per output sample and source indices are clamped.
std::vector<ResampleTaps> resample_taps(std::size_t in, std::size_t out);

/// Separable bicubic resize (width pass, then height pass), clamped to [0,1].
ImageBuffer bicubic_resize(const ImageBuffer& img, std::size_t out_h, std::size_t out_w);

/// Resize to the largest multiple of 8 in each axis not exceeding it.
ImageBuffer offset_fix(const ImageBuffer& hr);

struct DegradedPair {
  ImageBuffer lr;
  ImageBuffer hr;  // offset-fixed
};

/// Offset-fix the ground truth and bicubic-downscale it by `scale` (2, 4 or 8).
DegradedPair degrade_pair(const ImageBuffer& hr, int scale);

/// Y-channel PSNR in dB after cropping `scale` pixels from each border.
/// Identical inputs give +infinity.
double psnr(const ImageBuffer& a, const ImageBuffer& b, int scale);

/// Mean SSIM of the Y channels over all valid 11x11 Gaussian (sigma 1.5)
/// windows, C1 = (0.01*255)^2, C2 = (0.03*255)^2.
double ssim(const ImageBuffer& a, const ImageBuffer& b);

/// Luma plane for metrics: BT.601 Y for RGB, 255*v for grey images.
Plane luma255(const ImageBuffer& img);

struct SobelResult {
  Plane gx, gy, magnitude;
};

/// 3x3 Sobel with replicated borders.
SobelResult sobel_gradients(const Plane& plane);

/// Normalised 1-D Gaussian of radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur with replicated borders.
Plane gaussian_blur(const Plane& plane, double sigma);

/// Binary edge map: Gaussian smoothing, Sobel, 4-direction non-maximum
/// suppression and 8-connected hysteresis between t_low and t_high
/// (absolute gradient-magnitude thresholds).
Plane canny(const Plane& plane, double sigma, double t_low, double t_high);

/// Canny with thresholds expressed as fractions of the maximum smoothed
/// gradient magnitude. A flat plane yields an empty map.
Plane canny_relative(const Plane& plane, double sigma, double low_frac, double high_frac);

}  // namespace sredge::imageproc
