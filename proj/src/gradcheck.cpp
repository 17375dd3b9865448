#include "acrm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace acrm {

namespace {

// A probe that throws (e.g. a precondition violated by the +/-eps shift) is
// reported as NaN rather than propagated.
Real eval_at(const GradCheckFn& fn, const std::vector<Mat>& point) {
  try {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(point.size());
    for (const Mat& m : point) vars.push_back(tape.constant(m));
    return fn(tape, vars).scalar();
  } catch (const std::exception&) {
    return std::numeric_limits<Real>::quiet_NaN();
  }
}

}  // namespace

GradCheckResult grad_check(const GradCheckFn& fn, const std::vector<Mat>& point,
                           const GradCheckOptions& opts) {
  // Analytic pass.
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (const Mat& m : point) leaves.push_back(tape.leaf(m));
  Var loss = fn(tape, leaves);
  tape.backward(loss);
  std::vector<Mat> analytic;
  analytic.reserve(point.size());
  for (Var v : leaves) analytic.push_back(tape.grad(v));

  // Enumerate coordinates as (tensor, flat offset) pairs, optionally sampled.
  std::vector<std::pair<std::size_t, Index>> coords;
  for (std::size_t i = 0; i < point.size(); ++i)
    for (Index k = 0; k < point[i].size(); ++k) coords.emplace_back(i, k);
  if (opts.max_coords && static_cast<long>(coords.size()) > *opts.max_coords) {
    Rng rng = seeded_rng(opts.seed, "gradcheck-coords");
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<std::size_t>(*opts.max_coords));
  }

  GradCheckResult res;
  std::vector<Mat> probe = point;
  for (auto [i, k] : coords) {
    Real* slot = probe[i].data() + k;
    const Real saved = *slot;
    *slot = saved + opts.eps;
    const Real up = eval_at(fn, probe);
    *slot = saved - opts.eps;
    const Real down = eval_at(fn, probe);
    *slot = saved;
    const Real numeric = (up - down) / (2.0 * opts.eps);
    const Real a = *(analytic[i].data() + k);
    if (!std::isfinite(numeric) || !std::isfinite(a)) {
      res.saw_nan = true;
      continue;
    }
    const Real rel = std::abs(a - numeric) / std::max(Real(1), std::abs(a));
    res.max_rel_err = std::max(res.max_rel_err, rel);
    res.coords_checked += 1;
  }
  return res;
}

}  // namespace acrm
