#include "acrm/attention.hpp"

namespace acrm {

AttentionParams AttentionParams::init(Index d, Index d_a, Real scale, Rng& rng) {
  if (d_a <= 0) throw std::invalid_argument(cat("attention: d_a must be positive, got ", d_a));
  AttentionParams p;
  p.w_s = uniform_matrix(d, d_a, -scale, scale, rng);
  p.w_v = uniform_matrix(d, d_a, -scale, scale, rng);
  p.b_r = Mat::Zero(1, d_a);
  p.w_r = uniform_matrix(d_a, 1, -scale, scale, rng);
  return p;
}

void AttentionParams::visit(const std::string& prefix, const Visitor& fn) {
  fn(prefix + ".w_s", w_s);
  fn(prefix + ".w_v", w_v);
  fn(prefix + ".b_r", b_r);
  fn(prefix + ".w_r", w_r);
}

std::vector<Var> attention_word_proj(Binder& bind, const AttentionParams& p,
                                     std::span<const Var> word_states) {
  std::vector<Var> proj;
  proj.reserve(word_states.size());
  for (Var w : word_states) proj.push_back(matmul(w, bind(p.w_s)));
  return proj;
}

AttendedFrame attend_frame(Binder& bind, const AttentionParams& p, Var frame_state,
                           std::span<const Var> word_proj,
                           std::span<const Var> word_states, Var word_mask) {
  if (word_states.empty()) throw std::invalid_argument("attend: no word states");
  Var frame_proj = matmul(frame_state, bind(p.w_v)) + bind(p.b_r);
  std::vector<Var> per_word;
  per_word.reserve(word_proj.size());
  for (Var wp : word_proj)
    per_word.push_back(matmul(tanh(frame_proj + wp), bind(p.w_r)));
  AttendedFrame out;
  out.scores = concat_cols(per_word);
  out.weights = masked_softmax_rows(out.scores, word_mask);
  Var summary = word_states[0] * slice_cols(out.weights, 0, 1);
  for (std::size_t j = 1; j < word_states.size(); ++j)
    summary = summary + word_states[j] * slice_cols(out.weights, static_cast<Index>(j), 1);
  out.summary = summary;
  return out;
}

Var mean_pool_words(Binder& bind, std::span<const Var> word_states, Var word_mask) {
  if (word_states.empty()) throw std::invalid_argument("mean_pool: no word states");
  const Mat& mask = word_mask.value();
  Var acc = word_states[0] * slice_cols(word_mask, 0, 1);
  for (std::size_t j = 1; j < word_states.size(); ++j)
    acc = acc + word_states[j] * slice_cols(word_mask, static_cast<Index>(j), 1);
  Mat inv_count(mask.rows(), 1);
  for (Index r = 0; r < mask.rows(); ++r) {
    const Real cnt = mask.row(r).sum();
    if (cnt == 0)
      throw std::invalid_argument(cat("mean_pool: row ", r, " has no valid words"));
    inv_count(r, 0) = 1.0 / cnt;
  }
  return acc * bind.tape().constant(std::move(inv_count));
}

AttentionResult attend(const Mat& video, const Mat& query, const AttentionParams& p) {
  if (video.cols() != query.cols())
    throw std::invalid_argument(cat("attend: video ", shape_str(video), " vs query ",
                                    shape_str(query), " dimension mismatch"));
  if (query.rows() == 0) throw std::invalid_argument("attend: empty query");
  const Index frames = video.rows();
  const Index words = query.rows();
  Tape tape;
  Binder bind(tape, /*trainable=*/false);
  std::vector<Var> word_states;
  word_states.reserve(static_cast<std::size_t>(words));
  for (Index j = 0; j < words; ++j) word_states.push_back(tape.constant(query.row(j)));
  Var mask = tape.constant(Mat::Ones(1, words));
  std::vector<Var> proj = attention_word_proj(bind, p, word_states);

  AttentionResult res;
  res.summary.resize(frames, video.cols());
  res.weights.resize(frames, words);
  res.scores.resize(frames, words);
  for (Index t = 0; t < frames; ++t) {
    AttendedFrame f =
        attend_frame(bind, p, tape.constant(video.row(t)), proj, word_states, mask);
    res.scores.row(t) = f.scores.value();
    res.weights.row(t) = f.weights.value();
    res.summary.row(t) = f.summary.value();
  }
  return res;
}

Mat mean_pool_query(const Mat& query, Index frame_count) {
  if (query.rows() == 0) throw std::invalid_argument("mean_pool_query: empty query");
  Mat mean = query.colwise().mean();
  return mean.replicate(frame_count, 1);
}

}  // namespace acrm
