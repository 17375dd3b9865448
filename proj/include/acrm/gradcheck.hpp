#pragma once

// Central-finite-difference oracle for analytic gradients. The numeric side
// never touches backward(), so it stays independent of the adjoint rules it
// checks. Callers must keep the function smooth at the probe point (no kinks).

#include "acrm/common.hpp"
#include "acrm/tape.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace acrm {

// Builds a scalar loss from one Var per point tensor. The same closure is
// called with leaves (analytic pass) and constants (numeric passes).
using GradCheckFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckOptions {
  Real eps = 1e-5;
  // When set, checks only this many randomly chosen coordinates of the whole
  // point (seeded); otherwise every coordinate.
  std::optional<int> max_coords;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  Real max_rel_err = 0;
  long coords_checked = 0;
  bool saw_nan = false;

  bool ok(Real tol) const { return !saw_nan && max_rel_err < tol; }
};

GradCheckResult grad_check(const GradCheckFn& fn, const std::vector<Mat>& point,
                           const GradCheckOptions& opts = {});

// Convenience overload matching the common call shape.
inline Real grad_check_max_err(const GradCheckFn& fn, const std::vector<Mat>& point,
                               Real eps = 1e-5) {
  GradCheckOptions opts;
  opts.eps = eps;
  return grad_check(fn, point, opts).max_rel_err;
}

}  // namespace acrm
