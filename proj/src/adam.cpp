#include "sredge/adam.hpp"

#include <cmath>

#include "sredge/errors.hpp"

namespace sredge {

void adam_step(ParameterSet<float>& params, const GradMap& grads, AdamState& state, double lr) {
  for (const auto& [name, p] : params.tensors()) {
    auto g = grads.find(name);
    if (g == grads.end()) throw AlignmentError("adam_step: no gradient for parameter '" + name + "'");
    if (g->second.shape() != p.shape()) {
      throw AlignmentError("adam_step: gradient for '" + name + "' has shape " + shape_str(g->second.shape()) +
                           ", parameter has " + shape_str(p.shape()));
    }
    if (auto m = state.moments.find(name); m != state.moments.end() && m->second.m.shape() != p.shape()) {
      throw AlignmentError("adam_step: moments for '" + name + "' have shape " + shape_str(m->second.m.shape()));
    }
  }
  for (const auto& [name, g] : grads) {
    if (!params.contains(name)) throw AlignmentError("adam_step: gradient for unknown parameter '" + name + "'");
  }

  state.t += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (const auto& [name, g] : grads) {
    Tensor<float>& p = params.at(name);
    auto [it, fresh] = state.moments.try_emplace(name);
    if (fresh) it->second = {Tensor<float>(p.shape()), Tensor<float>(p.shape())};
    Tensor<float>& m = it->second.m;
    Tensor<float>& v = it->second.v;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double mhat = mi / c1;
      const double vhat = vi / c2;
      p[i] = static_cast<float>(p[i] - lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

}  // namespace sredge
