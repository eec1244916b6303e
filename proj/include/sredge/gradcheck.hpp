#pragma once

#include <cstddef>
#include <functional>

#include "sredge/autodiff.hpp"

namespace sredge {

using ScalarFn = std::function<Var<double>(Tape<double>&, Var<double>)>;

struct GradCheckOptions {
  /// Check at most this many coordinates (evenly strided); 0 checks all.
  std::size_t max_coords = 0;
  /// Exclude coordinates whose +-h stencil straddles a ReLU or |x| kink,
  /// where central differences do not estimate the derivative. A coordinate
  /// whose one-sided slopes disagree is re-probed at h/2: curvature halves
  /// the disagreement, a kink keeps it. Reported in `skipped_nonsmooth`.
  bool skip_nonsmooth = false;
  double nonsmooth_rtol = 1e-3;
  /// When positive, a coordinate that misses this relative tolerance by no
  /// more than the central difference's roundoff (taken as 4 eps |f| / h) is
  /// counted in `skipped_unresolved` instead: its derivative is too small for
  /// finite differences to confirm or refute.
  double resolve_rtol = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_nonsmooth = 0;
  std::size_t skipped_unresolved = 0;
  std::size_t worst_index = 0;
};

/// Compares reverse-mode gradients of the scalar `f(x)` against central
/// differences (f(x+h e_i) - f(x-h e_i)) / 2h. Per coordinate the error is
/// |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult grad_check(const ScalarFn& f, const Tensor<double>& x, double h, const GradCheckOptions& opts = {});

}  // namespace sredge
