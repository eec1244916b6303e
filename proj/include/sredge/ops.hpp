#pragma once

#include <optional>
#include <span>
#include <vector>

#include "sredge/autodiff.hpp"

namespace sredge::ops {

/// 2-D cross-correlation (no kernel flip) with zero padding.
/// input (N,C,H,W), weight (O,C,K,K), bias (O).
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, std::optional<Var<T>> bias, int stride, int padding);

template <typename T>
Var<T> relu(Var<T> x);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

template <typename T>
Var<T> scalar_mul(Var<T> x, double alpha);

/// Elementwise product of equal-shaped tensors.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

/// Stacks along the channel axis, in argument order.
template <typename T>
Var<T> channel_concat(std::span<const Var<T>> parts);

template <typename T>
Var<T> channel_concat(std::initializer_list<Var<T>> parts) {
  std::vector<Var<T>> v(parts);
  return channel_concat<T>(std::span<const Var<T>>(v));
}

template <typename T>
Var<T> sum(Var<T> x);

template <typename T>
Var<T> mean(Var<T> x);

template <typename T>
Var<T> sigmoid(Var<T> x);

/// Cell (i,j) averages rows [floor(i*H/bh), floor((i+1)*H/bh)) and the
/// analogous column window.
template <typename T>
Var<T> adaptive_avg_pool2d(Var<T> x, std::size_t bins_h, std::size_t bins_w);

/// out[n, c, r*Y+dy, r*X+dx] = in[n, c*r*r + dy*r + dx, Y, X]
template <typename T>
Var<T> pixel_shuffle(Var<T> x, int r);

/// Inverse of pixel_shuffle.
template <typename T>
Var<T> pixel_unshuffle(Var<T> x, int r);

/// Half-pixel-centre bilinear resize (align_corners = false).
template <typename T>
Var<T> bilinear_upsample(Var<T> x, std::size_t out_h, std::size_t out_w);

/// Mean absolute error.
template <typename T>
Var<T> loss_l1(Var<T> pred, Var<T> target);

/// Mean binary cross entropy on logits, in the overflow-free form
/// max(x,0) - t*x + log1p(exp(-|x|)).
template <typename T>
Var<T> loss_bce_logits(Var<T> logits, Var<T> target);

}  // namespace sredge::ops
