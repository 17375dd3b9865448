#pragma once

// Bidirectional LSTM encoder. Per-direction hidden size is half the output
// dimension; each step's output row is [forward state ; backward state].

#include "acrm/bind.hpp"
#include "acrm/common.hpp"
#include "acrm/tape.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace acrm {

struct GateParams {
  Mat wx;  // input_dim x hidden
  Mat wh;  // hidden x hidden
  Mat b;   // 1 x hidden
};

struct LstmDirParams {
  GateParams input, forget, output, candidate;
};

struct BiLstmParams {
  Index input_dim = 0;
  Index hidden = 0;  // per direction; output dim = 2 * hidden
  LstmDirParams fwd, bwd;

  Index output_dim() const { return 2 * hidden; }

  // Weights uniform(-scale, scale), zero biases, forget-gate bias +1.
  static BiLstmParams init(Index input_dim, Index output_dim, Real scale, Rng& rng);

  using Visitor = std::function<void(const std::string&, Mat&)>;
  void visit(const std::string& prefix, const Visitor& fn);
};

struct LstmState {
  Var h;
  Var c;
};

// Standard gated update: i,f,o = sigmoid(affine), g = tanh(affine),
// c' = f.c + i.g, h' = o.tanh(c'). x is B x input_dim, h/c are B x hidden.
LstmState lstm_step(Binder& bind, const LstmDirParams& p, Var x, LstmState s);

// Runs both directions over the step sequence and concatenates per step.
// step_masks (B x 1 per step, optional) zero the recurrent state at padded
// positions so a padded batch reproduces the unpadded runs on valid rows.
// Dropout applies to each direction's cell input only.
std::vector<Var> bilstm_states(Binder& bind, const BiLstmParams& p,
                               std::span<const Var> inputs,
                               std::span<const Var> step_masks, const Dropout& dropout);

// Single-sequence encoder (rows = steps): returns the T x d state matrix.
// Throws on an empty sequence.
Mat encode_sequence(const Mat& rows, const BiLstmParams& p, Real dropout_rate,
                    bool training, Rng* rng);

}  // namespace acrm
