#include "acrm/prediction.hpp"

#include "acrm/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace acrm {

MlpParams MlpParams::init(Index in, Index hidden, Real scale, Rng& rng) {
  MlpParams m;
  m.w1 = uniform_matrix(in, hidden, -scale, scale, rng);
  m.b1 = Mat::Zero(1, hidden);
  m.w2 = uniform_matrix(hidden, 1, -scale, scale, rng);
  m.b2 = Mat::Zero(1, 1);
  return m;
}

void MlpParams::visit(const std::string& prefix, const Visitor& fn) {
  fn(prefix + ".w1", w1);
  fn(prefix + ".b1", b1);
  fn(prefix + ".w2", w2);
  fn(prefix + ".b2", b2);
}

PredictorParams PredictorParams::init(Index input_dim, Index d, Index hidden,
                                      Real scale, bool tied, Rng& rng) {
  PredictorParams p;
  p.tied = tied;
  p.lstm_start = BiLstmParams::init(input_dim, d, scale, rng);
  if (!tied) {
    p.lstm_end = BiLstmParams::init(input_dim, d, scale, rng);
    p.lstm_internal = BiLstmParams::init(input_dim, d, scale, rng);
  }
  p.mlp_start = MlpParams::init(d, hidden, scale, rng);
  p.mlp_end = MlpParams::init(d, hidden, scale, rng);
  p.mlp_internal = MlpParams::init(d, hidden, scale, rng);
  return p;
}

void PredictorParams::visit(const std::string& prefix, const Visitor& fn) {
  lstm_start.visit(prefix + (tied ? ".lstm" : ".start.lstm"), fn);
  if (!tied) {
    lstm_end.visit(prefix + ".end.lstm", fn);
    lstm_internal.visit(prefix + ".internal.lstm", fn);
  }
  mlp_start.visit(prefix + ".start.mlp", fn);
  mlp_end.visit(prefix + ".end.mlp", fn);
  mlp_internal.visit(prefix + ".internal.mlp", fn);
}

namespace {

// Per-frame MLP scores collected into a B x T logit block.
Var head_logits(Binder& bind, const MlpParams& mlp, std::span<const Var> states) {
  std::vector<Var> scores;
  scores.reserve(states.size());
  for (Var s : states) {
    Var hidden = tanh(matmul(s, bind(mlp.w1)) + bind(mlp.b1));
    scores.push_back(matmul(hidden, bind(mlp.w2)) + bind(mlp.b2));
  }
  return concat_cols(scores);
}

}  // namespace

LogitTripleVars predict_logits_vars(Binder& bind, const PredictorParams& p,
                                    std::span<const Var> cross_steps,
                                    std::span<const Var> step_masks,
                                    const Dropout& dropout) {
  if (cross_steps.empty()) throw std::invalid_argument("predict: empty cross features");
  LogitTripleVars out;
  if (p.tied) {
    std::vector<Var> states =
        bilstm_states(bind, p.lstm_start, cross_steps, step_masks, dropout);
    out.e_s = head_logits(bind, p.mlp_start, states);
    out.e_e = head_logits(bind, p.mlp_end, states);
    out.e_f = head_logits(bind, p.mlp_internal, states);
  } else {
    out.e_s = head_logits(
        bind, p.mlp_start,
        bilstm_states(bind, p.lstm_start, cross_steps, step_masks, dropout));
    out.e_e = head_logits(
        bind, p.mlp_end,
        bilstm_states(bind, p.lstm_end, cross_steps, step_masks, dropout));
    out.e_f = head_logits(
        bind, p.mlp_internal,
        bilstm_states(bind, p.lstm_internal, cross_steps, step_masks, dropout));
  }
  return out;
}

LogitTriple predict_logits(const Mat& cross, const PredictorParams& p,
                           Real dropout_rate, bool training, Rng* rng) {
  if (cross.rows() == 0) throw std::invalid_argument("predict: empty cross features");
  Tape tape;
  Binder bind(tape, /*trainable=*/false);
  std::vector<Var> steps;
  steps.reserve(static_cast<std::size_t>(cross.rows()));
  for (Index t = 0; t < cross.rows(); ++t) steps.push_back(tape.constant(cross.row(t)));
  Dropout drop{dropout_rate, training, rng};
  LogitTripleVars v = predict_logits_vars(bind, p, steps, {}, drop);
  return {v.e_s.value(), v.e_e.value(), v.e_f.value()};
}

// ---- losses -------------------------------------------------------------------

namespace {

void check_gt(Index frames, int gt_s, int gt_e) {
  if (gt_s < 0 || gt_e < gt_s || gt_e >= frames)
    throw std::invalid_argument(
        cat("loss: ground truth (", gt_s, ", ", gt_e, ") out of range for T=", frames));
}

Mat log_softmax_row(const Mat& logits) {
  return masked_log_softmax_rows(logits, Mat::Ones(logits.rows(), logits.cols()));
}

}  // namespace

Real boundary_loss(const Mat& e_s, const Mat& e_e, int gt_s, int gt_e) {
  if (e_s.rows() != 1 || e_e.rows() != 1 || e_s.cols() != e_e.cols())
    throw std::invalid_argument(cat("boundary_loss: logit rows ", shape_str(e_s),
                                    " vs ", shape_str(e_e)));
  check_gt(e_s.cols(), gt_s, gt_e);
  const Mat lp_s = log_softmax_row(e_s);
  const Mat lp_e = log_softmax_row(e_e);
  return -(lp_s(0, gt_s) + lp_e(0, gt_e));
}

InternalLoss internal_loss(const Mat& e_f, int gt_s, int gt_e, bool strict_mean) {
  if (e_f.rows() != 1) throw std::invalid_argument("internal_loss: logits must be 1 x T");
  check_gt(e_f.cols(), gt_s, gt_e);
  const Mat lp = log_softmax_row(e_f);
  Real acc = 0;
  for (int j = gt_s; j <= gt_e; ++j) acc += lp(0, j);
  InternalLoss out;
  if (strict_mean) {
    out.value = -acc / static_cast<Real>(gt_e - gt_s + 1);
  } else if (gt_e == gt_s) {
    out.degenerate = true;
    out.value = -acc;
  } else {
    out.value = -acc / static_cast<Real>(gt_e - gt_s);
  }
  return out;
}

BatchLossVars batch_losses(Tape& tape, const LogitTripleVars& logits, Var frame_mask,
                           const std::vector<std::pair<int, int>>& gt, Real lambda,
                           bool strict_mean) {
  if (lambda < 0) throw std::invalid_argument(cat("batch_losses: lambda ", lambda, " < 0"));
  const Index batch = logits.e_s.rows();
  const Index frames = logits.e_s.cols();
  if (static_cast<Index>(gt.size()) != batch)
    throw std::invalid_argument(
        cat("batch_losses: ", gt.size(), " ground truths for batch of ", batch));
  const Mat& mask = frame_mask.value();
  Mat pick_s = Mat::Zero(batch, frames);
  Mat pick_e = Mat::Zero(batch, frames);
  Mat weight_f = Mat::Zero(batch, frames);
  BatchLossVars out;
  for (Index b = 0; b < batch; ++b) {
    const auto [s, e] = gt[static_cast<std::size_t>(b)];
    check_gt(frames, s, e);
    if (mask(b, e) == Real(0))
      throw std::invalid_argument(cat("batch_losses: ground truth end ", e,
                                      " is a padded frame for instance ", b));
    pick_s(b, s) = 1;
    pick_e(b, e) = 1;
    Real den;
    if (strict_mean) {
      den = static_cast<Real>(e - s + 1);
    } else if (e == s) {
      den = 1;
      out.degenerate_count += 1;
    } else {
      den = static_cast<Real>(e - s);
    }
    for (int j = s; j <= e; ++j) weight_f(b, j) = 1.0 / den;
  }
  const Real inv_k = 1.0 / static_cast<Real>(batch);
  Var lp_s = masked_log_softmax_rows(logits.e_s, frame_mask);
  Var lp_e = masked_log_softmax_rows(logits.e_e, frame_mask);
  Var lp_f = masked_log_softmax_rows(logits.e_f, frame_mask);
  out.l_c = scale(sum(lp_s * tape.constant(pick_s)) + sum(lp_e * tape.constant(pick_e)),
                  -inv_k);
  out.l_i = scale(sum(lp_f * tape.constant(weight_f)), -inv_k);
  out.l_total = out.l_c + scale(out.l_i, lambda);
  return out;
}

// ---- inference ------------------------------------------------------------------

namespace {

// Strictly better under (score desc, t_s asc, t_e asc).
bool better(const BoundaryPrediction& a, const BoundaryPrediction& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.t_s != b.t_s) return a.t_s < b.t_s;
  return a.t_e < b.t_e;
}

void check_logit_rows(const Mat& e_s, const Mat& e_e) {
  if (e_s.rows() != 1 || e_e.rows() != 1 || e_s.cols() != e_e.cols() || e_s.cols() == 0)
    throw std::invalid_argument(cat("infer: logit rows ", shape_str(e_s), " vs ",
                                    shape_str(e_e)));
}

}  // namespace

BoundaryPrediction infer_boundaries(const Mat& e_s, const Mat& e_e) {
  check_logit_rows(e_s, e_e);
  const Index frames = e_s.cols();
  int best_start = 0;  // argmax of e_s over [0, te], smallest index on ties
  BoundaryPrediction best{0, 0, e_s(0, 0) + e_e(0, 0)};
  for (Index te = 1; te < frames; ++te) {
    if (e_s(0, te) > e_s(0, best_start)) best_start = static_cast<int>(te);
    const BoundaryPrediction cand{best_start, static_cast<int>(te),
                                  e_s(0, best_start) + e_e(0, te)};
    if (better(cand, best)) best = cand;
  }
  return best;
}

std::vector<BoundaryPrediction> infer_top_k(const Mat& e_s, const Mat& e_e, int k) {
  check_logit_rows(e_s, e_e);
  if (k < 1) throw std::invalid_argument(cat("infer_top_k: k ", k, " < 1"));
  const Index frames = e_s.cols();

  // Prefix top-k of e_s by (value desc, index asc): for any end frame, only
  // these starts can appear among the k best pairs.
  struct Start {
    int idx;
    Real value;
  };
  std::vector<Start> prefix;
  std::vector<BoundaryPrediction> cands;
  for (Index te = 0; te < frames; ++te) {
    const Start s{static_cast<int>(te), e_s(0, te)};
    auto pos = std::find_if(prefix.begin(), prefix.end(), [&](const Start& o) {
      return s.value > o.value;  // equal values keep the earlier index first
    });
    prefix.insert(pos, s);
    if (static_cast<int>(prefix.size()) > k) prefix.pop_back();
    for (const Start& st : prefix)
      cands.push_back({st.idx, static_cast<int>(te), st.value + e_e(0, te)});
  }
  std::sort(cands.begin(), cands.end(), better);
  if (static_cast<int>(cands.size()) > k) cands.resize(static_cast<std::size_t>(k));
  return cands;
}

}  // namespace acrm
