#pragma once

// Boundary prediction: three head stacks (start / end / internal frame), each
// a BiLSTM over the cross-modal features followed by a per-frame MLP scalar.
// Heads share architecture, never parameters; the tied flag shares one BiLSTM
// across heads (MLPs stay separate). Also houses the training losses and the
// constrained argmax decoder.

#include "acrm/bind.hpp"
#include "acrm/common.hpp"
#include "acrm/lstm.hpp"
#include "acrm/tape.hpp"

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace acrm {

struct MlpParams {
  Mat w1;  // in x hidden
  Mat b1;  // 1 x hidden
  Mat w2;  // hidden x 1
  Mat b2;  // 1 x 1

  static MlpParams init(Index in, Index hidden, Real scale, Rng& rng);

  using Visitor = std::function<void(const std::string&, Mat&)>;
  void visit(const std::string& prefix, const Visitor& fn);
};

struct PredictorParams {
  bool tied = false;
  BiLstmParams lstm_start;
  BiLstmParams lstm_end;       // unused when tied
  BiLstmParams lstm_internal;  // unused when tied
  MlpParams mlp_start, mlp_end, mlp_internal;

  // input_dim: width of the cross features (d, or 2d for concat interaction).
  // d: BiLSTM output dim. hidden: MLP hidden width (tanh activation).
  static PredictorParams init(Index input_dim, Index d, Index hidden, Real scale,
                              bool tied, Rng& rng);

  using Visitor = std::function<void(const std::string&, Mat&)>;
  void visit(const std::string& prefix, const Visitor& fn);
};

struct LogitTripleVars {
  Var e_s, e_e, e_f;  // each B x T
};

LogitTripleVars predict_logits_vars(Binder& bind, const PredictorParams& p,
                                    std::span<const Var> cross_steps,
                                    std::span<const Var> step_masks,
                                    const Dropout& dropout);

struct LogitTriple {
  Mat e_s, e_e, e_f;  // each 1 x T
};

// Single-sequence surface over a T x input_dim cross-feature matrix.
LogitTriple predict_logits(const Mat& cross, const PredictorParams& p,
                           Real dropout_rate, bool training, Rng* rng = nullptr);

// ---- losses -------------------------------------------------------------------
// All logs are natural. Per-instance values; batch values average over K.

// -[log P_s(gt_s) + log P_e(gt_e)] from 1 x T logit rows.
Real boundary_loss(const Mat& e_s, const Mat& e_e, int gt_s, int gt_e);

struct InternalLoss {
  Real value = 0;
  bool degenerate = false;  // gt_s == gt_e fell back to denominator 1
};

// -[sum_{j=gt_s}^{gt_e} log P_f(j)] / den where den = gt_e - gt_s (one less
// than the number of summed terms) or the term count when strict_mean is set.
InternalLoss internal_loss(const Mat& e_f, int gt_s, int gt_e, bool strict_mean = false);

inline Real total_loss(Real l_c, Real l_i, Real lambda) {
  if (lambda < 0) throw std::invalid_argument(cat("total_loss: lambda ", lambda, " < 0"));
  return l_c + lambda * l_i;
}

// Batched losses on the tape. Ground-truth indices must be valid frames.
struct BatchLossVars {
  Var l_c, l_i, l_total;
  int degenerate_count = 0;
};

BatchLossVars batch_losses(Tape& tape, const LogitTripleVars& logits, Var frame_mask,
                           const std::vector<std::pair<int, int>>& gt, Real lambda,
                           bool strict_mean);

// ---- inference ------------------------------------------------------------------

struct BoundaryPrediction {
  int t_s = 0;
  int t_e = 0;
  Real score = 0;  // e_s(t_s) + e_e(t_e)

  bool operator==(const BoundaryPrediction&) const = default;
};

// argmax of e_s(t_s) + e_e(t_e) subject to t_s <= t_e, O(T) via a running
// prefix maximum. Ties break to the smallest t_s, then smallest t_e.
BoundaryPrediction infer_boundaries(const Mat& e_s, const Mat& e_e);

// The k best feasible pairs under the same ordering; returns all pairs when
// fewer than k exist.
std::vector<BoundaryPrediction> infer_top_k(const Mat& e_s, const Mat& e_e, int k);

}  // namespace acrm
