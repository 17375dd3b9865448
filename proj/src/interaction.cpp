#include "acrm/interaction.hpp"

#include "acrm/linalg.hpp"

namespace acrm {

NormMode parse_norm_mode(const std::string& s) {
  if (s == "tanh") return NormMode::kTanh;
  if (s == "gauss") return NormMode::kGauss;
  throw DataError(cat("unknown normalization '", s, "' (expected tanh|gauss)"));
}

InteractionKind parse_interaction_kind(const std::string& s) {
  if (s == "mul") return InteractionKind::kMul;
  if (s == "sub") return InteractionKind::kSub;
  if (s == "concat") return InteractionKind::kConcat;
  throw DataError(cat("unknown interaction '", s, "' (expected mul|sub|concat)"));
}

std::string to_string(NormMode m) { return m == NormMode::kTanh ? "tanh" : "gauss"; }

std::string to_string(InteractionKind k) {
  switch (k) {
    case InteractionKind::kMul: return "mul";
    case InteractionKind::kSub: return "sub";
    default: return "concat";
  }
}

ProjectionParams ProjectionParams::init(Index d, Real scale, Rng& rng) {
  ProjectionParams p;
  p.w_q = uniform_matrix(d, d, -scale, scale, rng);
  p.b_q = Mat::Zero(1, d);
  p.w_v = uniform_matrix(d, d, -scale, scale, rng);
  p.b_v = Mat::Zero(1, d);
  return p;
}

void ProjectionParams::visit(const std::string& prefix, const Visitor& fn) {
  fn(prefix + ".w_q", w_q);
  fn(prefix + ".b_q", b_q);
  fn(prefix + ".w_v", w_v);
  fn(prefix + ".b_v", b_v);
}

Var project_normalize(Binder& bind, Var states, const Mat& w, const Mat& b,
                      NormMode mode) {
  Var z = matmul(states, bind(w)) + bind(b);
  return mode == NormMode::kTanh ? tanh(z) : row_standardize(z, kGaussEps);
}

Mat project_normalize(const Mat& states, const Mat& w, const Mat& b, NormMode mode) {
  Mat z = (states * w).rowwise() + b.row(0);
  if (mode == NormMode::kTanh) return z.array().tanh().matrix();
  return standardize_rows(z, kGaussEps);
}

Var interact(Var video_hat, Var query_hat, InteractionKind kind) {
  switch (kind) {
    case InteractionKind::kMul: return video_hat * query_hat;
    case InteractionKind::kSub: return video_hat - query_hat;
    default: return concat_cols({video_hat, query_hat});
  }
}

Mat interact(const Mat& video_hat, const Mat& query_hat, InteractionKind kind) {
  if (kind != InteractionKind::kConcat &&
      (video_hat.rows() != query_hat.rows() || video_hat.cols() != query_hat.cols()))
    throw std::invalid_argument(cat("interact: shapes ", shape_str(video_hat), " vs ",
                                    shape_str(query_hat), " do not conform"));
  switch (kind) {
    case InteractionKind::kMul: return video_hat.cwiseProduct(query_hat);
    case InteractionKind::kSub: return video_hat - query_hat;
    default: {
      if (video_hat.rows() != query_hat.rows())
        throw std::invalid_argument(cat("interact: shapes ", shape_str(video_hat),
                                        " vs ", shape_str(query_hat),
                                        " differ in rows"));
      Mat out(video_hat.rows(), video_hat.cols() + query_hat.cols());
      out << video_hat, query_hat;
      return out;
    }
  }
}

}  // namespace acrm
