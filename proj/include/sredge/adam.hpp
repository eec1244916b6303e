#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "sredge/params.hpp"

namespace sredge {

struct AdamMoments {
  Tensor<float> m;
  Tensor<float> v;
  bool operator==(const AdamMoments&) const = default;
};

/// Per-parameter moment estimates plus the shared step counter.
struct AdamState {
  std::map<std::string, AdamMoments> moments;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamState&) const = default;
};

using GradMap = std::map<std::string, Tensor<float>>;

/// One bias-corrected ADAM update. Moments are created lazily (zero) for
/// parameters the state has not seen; every parameter must have a gradient
/// of matching shape.
void adam_step(ParameterSet<float>& params, const GradMap& grads, AdamState& state, double lr);

}  // namespace sredge
