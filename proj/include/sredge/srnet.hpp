#pragma once

#include <vector>

#include "sredge/config.hpp"
#include "sredge/image.hpp"
#include "sredge/layers.hpp"

namespace sredge {

/// Pyramid pooling followed by log2(scale) stages of
/// [3x3 conv to 4*feats -> pixel shuffle x2].
struct UpsampleHead {
  PyramidPool pool;
  std::vector<Conv2d> stages;

  UpsampleHead(const std::string& name, std::size_t feats, int scale, const std::vector<std::size_t>& bins);
  void declare(std::vector<ParamSpec>& specs) const;

  template <typename T>
  Var<T> operator()(const Binder<T>& b, Var<T> x) const;
};

/// EDSR with a pyramid-pooling upsampler.
///
///   head 3x3 (3 -> F) -> n residual blocks -> 3x3 conv -> + head
///   -> UpsampleHead -> tail 3x3 (F -> 3)
///
/// No mean shift; inputs and outputs live in [0,1] and the output is only
/// clamped when exported as an image.
class EdsrStar {
 public:
  explicit EdsrStar(SRConfig cfg);

  const SRConfig& config() const { return cfg_; }
  std::vector<ParamSpec> param_specs() const;

  /// (N,3,h,w) -> (N,3,scale*h,scale*w).
  template <typename T>
  Var<T> forward(const Binder<T>& b, Var<T> lr) const;

  /// Head features plus the long skip; the input to the upsampler.
  template <typename T>
  Var<T> trunk(const Binder<T>& b, Var<T> lr) const;

  template <typename T>
  Var<T> head_features(const Binder<T>& b, Var<T> lr) const;

  /// Inference on one image; the result is clamped to [0,1].
  ImageBuffer upscale(const ParameterSet<float>& params, const ImageBuffer& lr) const;

 private:
  SRConfig cfg_;
  Conv2d head_;
  std::vector<ResBlock> body_;
  Conv2d body_tail_;
  UpsampleHead up_;
  Conv2d tail_;
};

}  // namespace sredge
