#pragma once

#include "acrm/common.hpp"

#include <vector>

namespace acrm {

struct AdamConfig {
  Real lr = 1e-3;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
};

// Per-parameter first/second moments plus the shared step counter.
struct AdamState {
  std::vector<Mat> m;
  std::vector<Mat> v;
  long t = 0;

  void init_like(const std::vector<Mat*>& params) {
    m.clear();
    v.clear();
    for (const Mat* p : params) {
      m.push_back(Mat::Zero(p->rows(), p->cols()));
      v.push_back(Mat::Zero(p->rows(), p->cols()));
    }
    t = 0;
  }
};

// Bias-corrected Adam update, in place. Deterministic given inputs; a NaN
// gradient aborts training.
inline void adam_step(const std::vector<Mat*>& params, const std::vector<Mat>& grads,
                      AdamState& state, const AdamConfig& cfg = {}) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument(cat("adam_step: ", params.size(), " params vs ",
                                    grads.size(), " grads vs ", state.m.size(),
                                    " state slots"));
  state.t += 1;
  const Real bc1 = 1.0 - std::pow(cfg.beta1, static_cast<Real>(state.t));
  const Real bc2 = 1.0 - std::pow(cfg.beta2, static_cast<Real>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat& p = *params[i];
    const Mat& g = grads[i];
    if (p.rows() != g.rows() || p.cols() != g.cols())
      throw std::invalid_argument(cat("adam_step: param ", i, " shape ", shape_str(p),
                                      " vs grad ", shape_str(g)));
    if (!g.allFinite())
      throw NumericalError(cat("adam_step: non-finite gradient for parameter ", i));
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = (cfg.beta2 * state.v[i].array() + (1.0 - cfg.beta2) * g.array().square())
                     .matrix();
    p.array() -= cfg.lr * (state.m[i].array() / bc1) /
                 ((state.v[i].array() / bc2).sqrt() + cfg.eps);
  }
}

}  // namespace acrm
