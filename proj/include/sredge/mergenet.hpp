#pragma once

#include <vector>

#include "sredge/config.hpp"
#include "sredge/image.hpp"
#include "sredge/layers.hpp"

namespace sredge {

/// Fuses the SR image and its edge map:
///
///   h = head3x3(concat(sr, edge))            4 -> F
///   t = body3x3(resblocks(h)) + h + embed3x3(edge)
///   out = tail3x3(t)                         F -> 3
///
/// The edge embedding is the edge skip connection; with `edge_skip` off the
/// edge still enters through the fourth input channel. There is no
/// image-level skip and no resampling.
class MergeNet {
 public:
  explicit MergeNet(MergeConfig cfg);

  const MergeConfig& config() const { return cfg_; }
  std::vector<ParamSpec> param_specs() const;

  /// sr (N,3,H,W), edge (N,1,H,W) -> (N,3,H,W).
  template <typename T>
  Var<T> forward(const Binder<T>& b, Var<T> sr, Var<T> edge) const;

  template <typename T>
  Var<T> edge_embed(const Binder<T>& b, Var<T> edge) const;

  ImageBuffer merge(const ParameterSet<float>& params, const ImageBuffer& sr, const EdgeMap& edge) const;

 private:
  MergeConfig cfg_;
  Conv2d head_;
  std::vector<ResBlock> body_;
  Conv2d body_tail_;
  Conv2d embed_;
  Conv2d tail_;
};

}  // namespace sredge
