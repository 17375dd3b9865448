#pragma once

// Frame-by-word attention: each frame state attends over all word states and
// receives a frame-specific summary of the query.

#include "acrm/bind.hpp"
#include "acrm/common.hpp"
#include "acrm/tape.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace acrm {

struct AttentionParams {
  Mat w_s;  // d x d_a, word-side transform
  Mat w_v;  // d x d_a, frame-side transform (independent of the projection module's)
  Mat b_r;  // 1 x d_a
  Mat w_r;  // d_a x 1, scoring vector

  static AttentionParams init(Index d, Index d_a, Real scale, Rng& rng);

  using Visitor = std::function<void(const std::string&, Mat&)>;
  void visit(const std::string& prefix, const Visitor& fn);
};

// scores -> row-softmax weights -> convex combination of word states.
struct AttendedFrame {
  Var scores;   // B x m
  Var weights;  // B x m, rows sum to 1 over valid words
  Var summary;  // B x d
};

// Word-side projections (one B x d_a Var per word), computed once per forward.
std::vector<Var> attention_word_proj(Binder& bind, const AttentionParams& p,
                                     std::span<const Var> word_states);

// Attention for one frame across the batch. word_mask is B x m (constant).
AttendedFrame attend_frame(Binder& bind, const AttentionParams& p, Var frame_state,
                           std::span<const Var> word_proj,
                           std::span<const Var> word_states, Var word_mask);

// Mean of the valid word states (the attention-off baseline), B x d.
Var mean_pool_words(Binder& bind, std::span<const Var> word_states, Var word_mask);

// ---- single-sequence surface -------------------------------------------------

struct AttentionResult {
  Mat summary;  // T x d
  Mat weights;  // T x m
  Mat scores;   // T x m
};

// Runs the same per-frame routine over one (video T x d, query m x d) pair.
AttentionResult attend(const Mat& video, const Mat& query, const AttentionParams& p);

// Every output row is the mean of the word states.
Mat mean_pool_query(const Mat& query, Index frame_count);

}  // namespace acrm
