#include "sredge/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sredge/errors.hpp"

namespace sredge {
namespace {

double eval(const ScalarFn& f, const Tensor<double>& x) {
  Tape<double> tape;
  Var<double> out = f(tape, tape.constant(x));
  if (out.value().numel() != 1) throw UsageError("grad_check: function must return a scalar");
  return out.value()[0];
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, const Tensor<double>& x, double h, const GradCheckOptions& opts) {
  Tensor<double> analytic;
  double f0 = 0.0;
  {
    Tape<double> tape;
    Var<double> xv = tape.leaf(x);
    Var<double> out = f(tape, xv);
    f0 = out.value().item();
    analytic = tape.backward(out).of(xv);
  }

  const std::size_t n = x.numel();
  const std::size_t budget = opts.max_coords == 0 ? n : std::min(n, opts.max_coords);
  GradCheckResult res;
  Tensor<double> probe = x;
  for (std::size_t k = 0; k < budget; ++k) {
    const std::size_t i = budget == n ? k : k * n / budget;
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = eval(f, probe);
    probe[i] = orig - h;
    const double fm = eval(f, probe);
    probe[i] = orig;

    double numeric = (fp - fm) / (2.0 * h);
    if (opts.skip_nonsmooth) {
      const double jump = (fp - f0) / h - (f0 - fm) / h;
      const double scale = std::max({std::abs(fp - f0) / h, std::abs(f0 - fm) / h, 1e-6});
      if (std::abs(jump) > opts.nonsmooth_rtol * scale) {
        // Curvature shrinks the one-sided disagreement linearly with the
        // step; a kink inside the stencil does not.
        const double hh = 0.5 * h;
        probe[i] = orig + hh;
        const double fp2 = eval(f, probe);
        probe[i] = orig - hh;
        const double fm2 = eval(f, probe);
        probe[i] = orig;
        const double jump2 = (fp2 - f0) / hh - (f0 - fm2) / hh;
        if (std::abs(jump2) > 0.75 * std::abs(jump)) {
          ++res.skipped_nonsmooth;
          continue;
        }
        numeric = (fp2 - fm2) / (2.0 * hh);
      }
    }
    const double a = analytic[i];
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    if (opts.resolve_rtol > 0.0 && err > opts.resolve_rtol) {
      // A miss that is no larger than the difference quotient's own roundoff
      // says nothing about the gradient either way. Each evaluation of a
      // reduced loss carries a few ulps of rounding.
      const double roundoff = 4.0 * std::numeric_limits<double>::epsilon() * std::max({std::abs(fp), std::abs(fm), std::abs(f0)}) / h;
      if (std::abs(a - numeric) <= roundoff) {
        ++res.skipped_unresolved;
        continue;
      }
    }
    if (err > res.max_rel_error || res.checked == 0) {
      res.max_rel_error = std::max(res.max_rel_error, err);
      if (err >= res.max_rel_error) res.worst_index = i;
    }
    ++res.checked;
  }
  return res;
}

}  // namespace sredge
