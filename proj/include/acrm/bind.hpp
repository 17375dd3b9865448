#pragma once

// Maps parameter matrices to tape nodes for one forward pass, memoized by
// address so shared parameters bind once. Training binds leaves (gradients
// flow); evaluation binds constants. preset() lets callers such as the
// gradient checker substitute their own probe values for specific parameters.

#include "acrm/common.hpp"
#include "acrm/tape.hpp"

#include <unordered_map>

namespace acrm {

class Binder {
 public:
  Binder(Tape& tape, bool trainable) : tape_(&tape), trainable_(trainable) {}

  Var operator()(const Mat& m) {
    auto it = map_.find(&m);
    if (it != map_.end()) return it->second;
    Var v = trainable_ ? tape_->leaf(m) : tape_->constant(m);
    map_.emplace(&m, v);
    return v;
  }

  // Binds as a constant regardless of mode (frozen tensors, e.g. embeddings).
  Var frozen(const Mat& m) {
    auto it = map_.find(&m);
    if (it != map_.end()) return it->second;
    Var v = tape_->constant(m);
    map_.emplace(&m, v);
    return v;
  }

  void preset(const Mat* m, Var v) { map_.emplace(m, v); }

  // Gradient w.r.t. a bound parameter after backward(); zeros if never bound.
  Mat grad_of(const Mat& m) const {
    auto it = map_.find(&m);
    if (it == map_.end()) return Mat::Zero(m.rows(), m.cols());
    return tape_->grad(it->second);
  }

  Tape& tape() { return *tape_; }
  bool trainable() const { return trainable_; }

 private:
  Tape* tape_;
  bool trainable_;
  std::unordered_map<const Mat*, Var> map_;
};

// Per-step input dropout for the recurrent encoders. Inverted scaling keeps
// evaluation deterministic; rate 0 or eval mode applies nothing.
struct Dropout {
  Real rate = 0;
  bool training = false;
  Rng* rng = nullptr;

  bool active() const { return training && rate > 0 && rng != nullptr; }

  Var apply(Var x) const {
    if (!active()) return x;
    std::bernoulli_distribution keep(1.0 - rate);
    Mat mask(x.rows(), x.cols());
    const Real inv_keep = 1.0 / (1.0 - rate);
    for (Index i = 0; i < mask.rows(); ++i)
      for (Index j = 0; j < mask.cols(); ++j) mask(i, j) = keep(*rng) ? inv_keep : 0.0;
    return x * x.tape().constant(std::move(mask));
  }
};

}  // namespace acrm
