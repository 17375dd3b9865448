#pragma once

// Cross-modal interaction: both modalities are projected into a shared
// range-controlled space, then combined elementwise per frame.

#include "acrm/bind.hpp"
#include "acrm/common.hpp"
#include "acrm/tape.hpp"

#include <functional>
#include <string>

namespace acrm {

enum class NormMode { kTanh, kGauss };
// concat is the ablation baseline: it widens the predictor input to 2d
// instead of combining the modalities.
enum class InteractionKind { kMul, kSub, kConcat };

NormMode parse_norm_mode(const std::string& s);
InteractionKind parse_interaction_kind(const std::string& s);
std::string to_string(NormMode m);
std::string to_string(InteractionKind k);

struct ProjectionParams {
  Mat w_q;  // d x d
  Mat b_q;  // 1 x d
  Mat w_v;  // d x d
  Mat b_v;  // 1 x d

  static ProjectionParams init(Index d, Real scale, Rng& rng);

  using Visitor = std::function<void(const std::string&, Mat&)>;
  void visit(const std::string& prefix, const Visitor& fn);
};

inline constexpr Real kGaussEps = 1e-6;

// tanh mode: tanh(states W + b). gauss mode: per-row standardization of
// states W + b (population std, + kGaussEps).
Var project_normalize(Binder& bind, Var states, const Mat& w, const Mat& b,
                      NormMode mode);
Mat project_normalize(const Mat& states, const Mat& w, const Mat& b, NormMode mode);

Var interact(Var video_hat, Var query_hat, InteractionKind kind);
Mat interact(const Mat& video_hat, const Mat& query_hat, InteractionKind kind);

}  // namespace acrm
