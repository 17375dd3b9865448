#include "acrm/gradcheck.hpp"
#include "acrm/linalg.hpp"
#include "acrm/prediction.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace acrm;

namespace {

// Independent oracle: every feasible pair, ordered by (score desc, t_s asc,
// t_e asc) through a stable enumeration.
std::vector<BoundaryPrediction> brute_force_pairs(const Mat& e_s, const Mat& e_e) {
  std::vector<BoundaryPrediction> all;
  for (int s = 0; s < e_s.cols(); ++s)
    for (int e = s; e < e_s.cols(); ++e)
      all.push_back({s, e, e_s(0, s) + e_e(0, e)});
  std::stable_sort(all.begin(), all.end(),
                   [](const BoundaryPrediction& a, const BoundaryPrediction& b) {
                     if (a.score != b.score) return a.score > b.score;
                     if (a.t_s != b.t_s) return a.t_s < b.t_s;
                     return a.t_e < b.t_e;
                   });
  return all;
}

Mat row_of(std::initializer_list<Real> values) {
  Mat m(1, static_cast<Index>(values.size()));
  Index i = 0;
  for (Real v : values) m(0, i++) = v;
  return m;
}

PredictorParams random_predictor(Index in, Index d, Index hidden, bool tied,
                                 std::uint64_t seed) {
  Rng rng = seeded_rng(seed, "test-pred");
  return PredictorParams::init(in, d, hidden, 0.4, tied, rng);
}

}  // namespace

TEST_SUITE_BEGIN("prediction");

TEST_CASE("zero-initialized heads produce uniform probabilities") {
  PredictorParams p = random_predictor(3, 4, 8, false, 1);
  for (MlpParams* mlp : {&p.mlp_start, &p.mlp_end, &p.mlp_internal}) {
    mlp->w1.setZero();
    mlp->w2.setZero();
  }
  Rng rng = seeded_rng(1, "uniform");
  LogitTriple logits = predict_logits(gaussian_matrix(5, 3, 0, 1, rng), p, 0, false);
  CHECK(logits.e_s.isZero(0.0));
  Mat probs = softmax_rows(logits.e_s);
  for (Index t = 0; t < 5; ++t) CHECK(probs(0, t) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("single frame: probabilities are [1]") {
  PredictorParams p = random_predictor(3, 4, 8, false, 2);
  Rng rng = seeded_rng(2, "t1");
  LogitTriple logits = predict_logits(gaussian_matrix(1, 3, 0, 1, rng), p, 0, false);
  CHECK(logits.e_s.cols() == 1);
  CHECK(softmax_rows(logits.e_s)(0, 0) == 1.0);
  CHECK(softmax_rows(logits.e_e)(0, 0) == 1.0);
  CHECK(softmax_rows(logits.e_f)(0, 0) == 1.0);
}

TEST_CASE("softmax of head logits sums to 1") {
  PredictorParams p = random_predictor(4, 6, 8, false, 3);
  Rng rng = seeded_rng(3, "sum1");
  LogitTriple logits = predict_logits(gaussian_matrix(7, 4, 0, 2, rng), p, 0, false);
  for (const Mat* e : {&logits.e_s, &logits.e_e, &logits.e_f})
    CHECK(std::abs(softmax_rows(*e).sum() - 1.0) <= 1e-9);
}

TEST_CASE("tied predictor shares the recurrent stack but not the MLPs") {
  PredictorParams p = random_predictor(4, 6, 8, true, 4);
  std::vector<std::string> names;
  p.visit("pred", [&](const std::string& n, Mat&) { names.push_back(n); });
  long lstm_tensors = 0, mlp_tensors = 0;
  for (const std::string& n : names) {
    if (n.find(".lstm.") != std::string::npos) lstm_tensors += 1;
    if (n.find(".mlp.") != std::string::npos) mlp_tensors += 1;
  }
  CHECK(lstm_tensors == 24);  // one BiLSTM: 2 dirs x 4 gates x 3 tensors
  CHECK(mlp_tensors == 12);   // three MLPs
  Rng rng = seeded_rng(4, "tied");
  LogitTriple logits = predict_logits(gaussian_matrix(5, 4, 0, 1, rng), p, 0, false);
  CHECK((logits.e_s - logits.e_e).cwiseAbs().maxCoeff() > 0.0);  // separate MLPs
}

TEST_CASE("boundary loss: uniform logits give 2 ln T") {
  Mat zeros = Mat::Zero(1, 10);
  CHECK(boundary_loss(zeros, zeros, 3, 7) ==
        doctest::Approx(2.0 * std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("boundary loss: mass on the truth lowers the loss") {
  Mat peaked = Mat::Zero(1, 10);
  peaked(0, 3) = 4.0;
  Mat zeros = Mat::Zero(1, 10);
  CHECK(boundary_loss(peaked, zeros, 3, 7) < 2.0 * std::log(10.0));
}

TEST_CASE("boundary loss: direct softmax evaluation") {
  // T=3, e_s=[0,0,0], e_e=[0, ln 8, 0], gt=(0,1): ln 3 + ln(10/8).
  Mat e_s = Mat::Zero(1, 3);
  Mat e_e = row_of({0.0, std::log(8.0), 0.0});
  CHECK(boundary_loss(e_s, e_e, 0, 1) ==
        doctest::Approx(std::log(3.0) + std::log(10.0 / 8.0)).epsilon(1e-12));
}

TEST_CASE("boundary loss rejects out-of-range indices") {
  Mat zeros = Mat::Zero(1, 5);
  CHECK_THROWS_AS(boundary_loss(zeros, zeros, -1, 2), std::invalid_argument);
  CHECK_THROWS_AS(boundary_loss(zeros, zeros, 3, 5), std::invalid_argument);
  CHECK_THROWS_AS(boundary_loss(zeros, zeros, 3, 2), std::invalid_argument);
}

TEST_CASE("internal loss: uniform logits keep the verbatim denominator") {
  // T=10, gt=(2,5): 4 ln 10 / 3.
  Mat zeros = Mat::Zero(1, 10);
  InternalLoss l = internal_loss(zeros, 2, 5, false);
  CHECK_FALSE(l.degenerate);
  CHECK(l.value == doctest::Approx(4.0 * std::log(10.0) / 3.0).epsilon(1e-12));
  // strict_mean divides by the term count instead
  InternalLoss strict = internal_loss(zeros, 2, 5, true);
  CHECK(strict.value == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("internal loss: concentrated mass beats uniform") {
  Mat peaked = Mat::Zero(1, 10);
  for (int j = 2; j <= 5; ++j) peaked(0, j) = 3.0;
  CHECK(internal_loss(peaked, 2, 5, false).value <
        internal_loss(Mat::Zero(1, 10), 2, 5, false).value);
}

TEST_CASE("internal loss: single-frame moment falls back to denominator 1") {
  Rng rng = seeded_rng(5, "deg");
  Mat e_f = gaussian_matrix(1, 9, 0, 1, rng);
  InternalLoss l = internal_loss(e_f, 4, 4, false);
  CHECK(l.degenerate);
  const Mat lp = masked_log_softmax_rows(e_f, Mat::Ones(1, 9));
  CHECK(l.value == doctest::Approx(-lp(0, 4)).epsilon(1e-12));
}

TEST_CASE("total loss is the exact weighted sum") {
  CHECK(total_loss(4.60517, 3.07011, 0.0) == 4.60517);
  // uniform T=10 boundary and gt=(2,5) internal values under lambda 0.7
  const Real l_c = 2.0 * std::log(10.0);
  const Real l_i = 4.0 * std::log(10.0) / 3.0;
  CHECK(total_loss(l_c, l_i, 0.7) == l_c + 0.7 * l_i);
  CHECK(total_loss(l_c, l_i, 0.7) == doctest::Approx(6.75425).epsilon(1e-5));
  // the TACoS trade-off setting
  CHECK(total_loss(2.0, 1.0, 1.1) == doctest::Approx(3.1).epsilon(1e-15));
  CHECK_THROWS_AS(total_loss(1.0, 1.0, -0.1), std::invalid_argument);
}

TEST_CASE("batched losses match the per-instance surface") {
  Rng rng = seeded_rng(6, "batch-loss");
  const Index frames = 8;
  Mat e_s = gaussian_matrix(3, frames, 0, 1, rng);
  Mat e_e = gaussian_matrix(3, frames, 0, 1, rng);
  Mat e_f = gaussian_matrix(3, frames, 0, 1, rng);
  std::vector<std::pair<int, int>> gt = {{1, 4}, {0, 7}, {5, 5}};
  Tape tape;
  LogitTripleVars logits{tape.constant(e_s), tape.constant(e_e), tape.constant(e_f)};
  BatchLossVars v = batch_losses(tape, logits, tape.constant(Mat::Ones(3, frames)), gt,
                                 0.7, false);
  Real lc = 0, li = 0;
  for (int b = 0; b < 3; ++b) {
    lc += boundary_loss(e_s.row(b), e_e.row(b), gt[b].first, gt[b].second);
    li += internal_loss(e_f.row(b), gt[b].first, gt[b].second, false).value;
  }
  CHECK(v.l_c.scalar() == doctest::Approx(lc / 3).epsilon(1e-12));
  CHECK(v.l_i.scalar() == doctest::Approx(li / 3).epsilon(1e-12));
  CHECK(v.l_total.scalar() == doctest::Approx(lc / 3 + 0.7 * li / 3).epsilon(1e-12));
  CHECK(v.degenerate_count == 1);
}

TEST_CASE("lambda 0 total equals the boundary loss bit for bit") {
  Rng rng = seeded_rng(7, "l0");
  Tape tape;
  LogitTripleVars logits{tape.constant(gaussian_matrix(2, 5, 0, 1, rng)),
                         tape.constant(gaussian_matrix(2, 5, 0, 1, rng)),
                         tape.constant(gaussian_matrix(2, 5, 0, 1, rng))};
  BatchLossVars v = batch_losses(tape, logits, tape.constant(Mat::Ones(2, 5)),
                                 {{0, 2}, {1, 4}}, 0.0, false);
  CHECK(v.l_total.scalar() == v.l_c.scalar());
}

TEST_CASE("inference: single-frame, ordered and tie-breaking cases") {
  CHECK(infer_boundaries(row_of({1.0}), row_of({2.0})) == BoundaryPrediction{0, 0, 3.0});
  // unconstrained argmaxes already ordered
  CHECK(infer_boundaries(row_of({3, 0, 0}), row_of({0, 0, 5})) ==
        BoundaryPrediction{0, 2, 8.0});
  // infeasible unconstrained pair, tie between (1,1) and (1,2) broken by t_e
  CHECK(infer_boundaries(row_of({0, 10, 0}), row_of({9, 0, 0})) ==
        BoundaryPrediction{1, 1, 10.0});
}

TEST_CASE("inference is shift invariant per head") {
  Rng rng = seeded_rng(8, "shift");
  for (int trial = 0; trial < 50; ++trial) {
    Mat e_s = gaussian_matrix(1, 12, 0, 2, rng);
    Mat e_e = gaussian_matrix(1, 12, 0, 2, rng);
    BoundaryPrediction base = infer_boundaries(e_s, e_e);
    Mat s2 = e_s.array() + 3.25;
    Mat e2 = e_e.array() - 1.5;
    BoundaryPrediction shifted = infer_boundaries(s2, e2);
    CHECK(shifted.t_s == base.t_s);
    CHECK(shifted.t_e == base.t_e);
  }
}

TEST_CASE("inference matches brute force exactly, ties included") {
  Rng rng = seeded_rng(9, "brute");
  std::uniform_int_distribution<int> t_dist(1, 30);
  for (int trial = 0; trial < 300; ++trial) {
    const int frames = t_dist(rng);
    Mat e_s = gaussian_matrix(1, frames, 0, 2, rng);
    Mat e_e = gaussian_matrix(1, frames, 0, 2, rng);
    if (trial % 2 == 0) {  // quantize to force ties
      e_s = (e_s.array() * 2).round() / 2;
      e_e = (e_e.array() * 2).round() / 2;
    }
    const auto oracle = brute_force_pairs(e_s, e_e);
    CHECK(infer_boundaries(e_s, e_e) == oracle[0]);
  }
}

TEST_CASE("top-k: k=1 equals infer_boundaries; exhaustion returns all pairs") {
  Rng rng = seeded_rng(10, "topk1");
  Mat e_s = gaussian_matrix(1, 9, 0, 1, rng);
  Mat e_e = gaussian_matrix(1, 9, 0, 1, rng);
  const auto top1 = infer_top_k(e_s, e_e, 1);
  REQUIRE(top1.size() == 1);
  CHECK(top1[0] == infer_boundaries(e_s, e_e));
  // T=2, all logits zero: three feasible pairs in tie-break order
  Mat z = Mat::Zero(1, 2);
  const auto all = infer_top_k(z, z, 10);
  REQUIRE(all.size() == 3);
  CHECK(all[0] == BoundaryPrediction{0, 0, 0.0});
  CHECK(all[1] == BoundaryPrediction{0, 1, 0.0});
  CHECK(all[2] == BoundaryPrediction{1, 1, 0.0});
}

TEST_CASE("top-k matches brute force on random instances") {
  Rng rng = seeded_rng(11, "topk");
  for (int trial = 0; trial < 100; ++trial) {
    const int frames = std::uniform_int_distribution<int>(1, 20)(rng);
    Mat e_s = gaussian_matrix(1, frames, 0, 2, rng);
    Mat e_e = gaussian_matrix(1, frames, 0, 2, rng);
    if (trial % 3 == 0) {
      e_s = e_s.array().round();
      e_e = e_e.array().round();
    }
    const auto oracle = brute_force_pairs(e_s, e_e);
    const int k = std::uniform_int_distribution<int>(1, 5)(rng);
    const auto got = infer_top_k(e_s, e_e, k);
    const auto expect = std::min<std::size_t>(static_cast<std::size_t>(k), oracle.size());
    REQUIRE(got.size() == expect);
    for (std::size_t i = 0; i < expect; ++i) CHECK(got[i] == oracle[i]);
  }
}

TEST_CASE("head losses gradcheck below 1e-4, including masked frames") {
  Rng rng = seeded_rng(12, "loss-grad");
  Mat e_s = gaussian_matrix(2, 6, 0, 1, rng);
  Mat e_e = gaussian_matrix(2, 6, 0, 1, rng);
  Mat e_f = gaussian_matrix(2, 6, 0, 1, rng);
  Mat mask = Mat::Ones(2, 6);
  mask(0, 5) = 0;  // padded tail
  auto fn = [&](Tape& tape, const std::vector<Var>& vs) {
    LogitTripleVars logits{vs[0], vs[1], vs[2]};
    BatchLossVars v = batch_losses(tape, logits, tape.constant(mask), {{1, 3}, {2, 5}},
                                   0.7, false);
    return v.l_total;
  };
  GradCheckResult res = grad_check(fn, {e_s, e_e, e_f});
  CHECK(res.ok(1e-4));
  CHECK(res.max_rel_err < 1e-7);
}

TEST_SUITE_END();
