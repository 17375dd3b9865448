#pragma once

// Row-oriented dense kernels shared by the autodiff tape and the plain
// (inference-only) code paths. All softmax variants subtract the row max
// before exponentiating.

#include "acrm/common.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace acrm {

template <class Derived>
Mat softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  Mat out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Real mx = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

// Masked entries (mask == 0) get exactly 0; the rest renormalize. A row with
// no valid entries is an error.
template <class DerivedX, class DerivedM>
Mat masked_softmax_rows(const Eigen::MatrixBase<DerivedX>& x,
                        const Eigen::MatrixBase<DerivedM>& mask) {
  if (x.rows() != mask.rows() || x.cols() != mask.cols())
    throw std::invalid_argument(cat("masked_softmax: shapes ", shape_str(x.rows(), x.cols()),
                                    " vs ", shape_str(mask.rows(), mask.cols())));
  Mat out = Mat::Zero(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    Real mx = -std::numeric_limits<Real>::infinity();
    for (Index c = 0; c < x.cols(); ++c)
      if (mask(r, c) != Real(0)) mx = std::max(mx, x(r, c));
    if (!std::isfinite(mx))
      throw std::invalid_argument(cat("masked_softmax: row ", r, " has no valid entries"));
    Real sum = 0;
    for (Index c = 0; c < x.cols(); ++c) {
      if (mask(r, c) != Real(0)) {
        out(r, c) = std::exp(x(r, c) - mx);
        sum += out(r, c);
      }
    }
    out.row(r) /= sum;
  }
  return out;
}

// Natural-log softmax over valid entries; masked entries hold 0 (callers pair
// the result with weights that vanish there).
template <class DerivedX, class DerivedM>
Mat masked_log_softmax_rows(const Eigen::MatrixBase<DerivedX>& x,
                            const Eigen::MatrixBase<DerivedM>& mask) {
  if (x.rows() != mask.rows() || x.cols() != mask.cols())
    throw std::invalid_argument(cat("masked_log_softmax: shapes ", shape_str(x.rows(), x.cols()),
                                    " vs ", shape_str(mask.rows(), mask.cols())));
  Mat out = Mat::Zero(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    Real mx = -std::numeric_limits<Real>::infinity();
    for (Index c = 0; c < x.cols(); ++c)
      if (mask(r, c) != Real(0)) mx = std::max(mx, x(r, c));
    if (!std::isfinite(mx))
      throw std::invalid_argument(cat("masked_log_softmax: row ", r, " has no valid entries"));
    Real sum = 0;
    for (Index c = 0; c < x.cols(); ++c)
      if (mask(r, c) != Real(0)) sum += std::exp(x(r, c) - mx);
    const Real lse = mx + std::log(sum);
    for (Index c = 0; c < x.cols(); ++c)
      if (mask(r, c) != Real(0)) out(r, c) = x(r, c) - lse;
  }
  return out;
}

// Per-row standardization: subtract the row mean, divide by the row
// population standard deviation plus eps. Constant rows map to zero.
template <class Derived>
Mat standardize_rows(const Eigen::MatrixBase<Derived>& x, Real eps) {
  Mat out(x.rows(), x.cols());
  const Real n = static_cast<Real>(x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Real mean = x.row(r).mean();
    const Real var = (x.row(r).array() - mean).square().sum() / n;
    out.row(r) = (x.row(r).array() - mean) / (std::sqrt(var) + eps);
  }
  return out;
}

template <class Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& x) {
  return x.allFinite();
}

}  // namespace acrm
