#include "acrm/lstm.hpp"

namespace acrm {

namespace {

GateParams init_gate(Index input_dim, Index hidden, Real scale, Real bias, Rng& rng) {
  GateParams g;
  g.wx = uniform_matrix(input_dim, hidden, -scale, scale, rng);
  g.wh = uniform_matrix(hidden, hidden, -scale, scale, rng);
  g.b = Mat::Constant(1, hidden, bias);
  return g;
}

LstmDirParams init_dir(Index input_dim, Index hidden, Real scale, Rng& rng) {
  LstmDirParams d;
  d.input = init_gate(input_dim, hidden, scale, 0.0, rng);
  d.forget = init_gate(input_dim, hidden, scale, 1.0, rng);
  d.output = init_gate(input_dim, hidden, scale, 0.0, rng);
  d.candidate = init_gate(input_dim, hidden, scale, 0.0, rng);
  return d;
}

void visit_gate(GateParams& g, const std::string& prefix,
                const BiLstmParams::Visitor& fn) {
  fn(prefix + ".wx", g.wx);
  fn(prefix + ".wh", g.wh);
  fn(prefix + ".b", g.b);
}

void visit_dir(LstmDirParams& d, const std::string& prefix,
               const BiLstmParams::Visitor& fn) {
  visit_gate(d.input, prefix + ".input", fn);
  visit_gate(d.forget, prefix + ".forget", fn);
  visit_gate(d.output, prefix + ".output", fn);
  visit_gate(d.candidate, prefix + ".candidate", fn);
}

Var gate_affine(Binder& bind, const GateParams& g, Var x, Var h) {
  return matmul(x, bind(g.wx)) + matmul(h, bind(g.wh)) + bind(g.b);
}

}  // namespace

BiLstmParams BiLstmParams::init(Index input_dim, Index output_dim, Real scale,
                                Rng& rng) {
  if (output_dim % 2 != 0)
    throw std::invalid_argument(cat("bilstm: output dim ", output_dim, " must be even"));
  BiLstmParams p;
  p.input_dim = input_dim;
  p.hidden = output_dim / 2;
  p.fwd = init_dir(input_dim, p.hidden, scale, rng);
  p.bwd = init_dir(input_dim, p.hidden, scale, rng);
  return p;
}

void BiLstmParams::visit(const std::string& prefix, const Visitor& fn) {
  visit_dir(fwd, prefix + ".fwd", fn);
  visit_dir(bwd, prefix + ".bwd", fn);
}

LstmState lstm_step(Binder& bind, const LstmDirParams& p, Var x, LstmState s) {
  Var i = sigmoid(gate_affine(bind, p.input, x, s.h));
  Var f = sigmoid(gate_affine(bind, p.forget, x, s.h));
  Var o = sigmoid(gate_affine(bind, p.output, x, s.h));
  Var g = tanh(gate_affine(bind, p.candidate, x, s.h));
  Var c = f * s.c + i * g;
  Var h = o * tanh(c);
  return {h, c};
}

std::vector<Var> bilstm_states(Binder& bind, const BiLstmParams& p,
                               std::span<const Var> inputs,
                               std::span<const Var> step_masks, const Dropout& dropout) {
  if (inputs.empty()) throw std::invalid_argument("bilstm: empty input sequence");
  if (!step_masks.empty() && step_masks.size() != inputs.size())
    throw std::invalid_argument(cat("bilstm: ", step_masks.size(), " masks for ",
                                    inputs.size(), " steps"));
  const auto steps = inputs.size();
  const Index batch = inputs[0].rows();
  Tape& tape = bind.tape();

  auto run_dir = [&](const LstmDirParams& dir, bool reverse) {
    std::vector<Var> states(steps);
    LstmState s{tape.constant(Mat::Zero(batch, p.hidden)),
                tape.constant(Mat::Zero(batch, p.hidden))};
    for (std::size_t k = 0; k < steps; ++k) {
      const std::size_t t = reverse ? steps - 1 - k : k;
      s = lstm_step(bind, dir, dropout.apply(inputs[t]), s);
      if (!step_masks.empty()) {
        s.h = s.h * step_masks[t];
        s.c = s.c * step_masks[t];
      }
      states[t] = s.h;
    }
    return states;
  };

  std::vector<Var> fwd = run_dir(p.fwd, false);
  std::vector<Var> bwd = run_dir(p.bwd, true);
  std::vector<Var> out(steps);
  for (std::size_t t = 0; t < steps; ++t) out[t] = concat_cols({fwd[t], bwd[t]});
  return out;
}

Mat encode_sequence(const Mat& rows, const BiLstmParams& p, Real dropout_rate,
                    bool training, Rng* rng) {
  if (rows.rows() == 0) throw std::invalid_argument("encode_sequence: empty sequence");
  if (rows.cols() != p.input_dim)
    throw std::invalid_argument(cat("encode_sequence: input dim ", rows.cols(),
                                    " vs params ", p.input_dim));
  Tape tape;
  Binder bind(tape, /*trainable=*/false);
  std::vector<Var> steps;
  steps.reserve(static_cast<std::size_t>(rows.rows()));
  for (Index t = 0; t < rows.rows(); ++t) steps.push_back(tape.constant(rows.row(t)));
  Dropout drop{dropout_rate, training, rng};
  std::vector<Var> states = bilstm_states(bind, p, steps, {}, drop);
  Mat out(rows.rows(), p.output_dim());
  for (Index t = 0; t < rows.rows(); ++t)
    out.row(t) = states[static_cast<std::size_t>(t)].value();
  return out;
}

}  // namespace acrm
