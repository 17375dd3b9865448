#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every primitive applied to its Vars; backward() walks the
// record in reverse and accumulates adjoints into the leaves. Tape order is a
// topological order by construction, so no explicit sort is needed. A Tape and
// its Vars are confined to one worker; frozen parameter matrices may be shared
// read-only across workers.

#include "acrm/common.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace acrm {

class Tape;
namespace detail {
struct TapeOps;
}

// Lightweight handle to a node on a Tape. Copy freely; never outlives the Tape.
class Var {
 public:
  Var() = default;

  const Mat& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Real scalar() const;
  Tape& tape() const { return *tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  friend struct detail::TapeOps;
  Var(Tape* tape, std::int32_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::int32_t id_ = -1;
};

enum class Op : std::uint8_t {
  kConstant,
  kLeaf,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kTanh,
  kSigmoid,
  kExp,
  kLog,
  kSqrt,
  kConcatCols,
  kSliceCols,
  kSoftmaxRows,
  kMaskedSoftmaxRows,
  kMaskedLogSoftmaxRows,
  kRowMean,
  kRowVar,
  kMaskedRowMean,
  kRowStandardize,
  kSum,
  kScale,
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Trainable input: receives a gradient during backward().
  Var leaf(Mat value);
  // Non-trainable input (data, masks, frozen embeddings, dropout masks).
  Var constant(Mat value);

  const Mat& value(Var v) const { return node(v).value; }

  // Gradient of the last backward() loss w.r.t. v. Zero matrix for leaves the
  // loss does not depend on.
  Mat grad(Var v) const;

  // Reverse accumulation from a scalar (1x1) loss.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Drops all nodes but keeps buffer capacity for the next step.
  void clear();

 private:
  friend struct detail::TapeOps;

  struct Node {
    Op op;
    bool requires_grad = false;
    std::int32_t aux0 = 0;  // broadcast code / slice start
    std::int32_t aux1 = 0;  // slice length
    Real alpha = 0;         // scale factor / standardize eps
    std::vector<std::int32_t> inputs;
    Mat value;
    Mat grad;
  };

  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id_)]; }
  const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.id_)]; }

  Var emit(Op op, Mat value, std::vector<std::int32_t> inputs, std::int32_t aux0 = 0,
           std::int32_t aux1 = 0, Real alpha = 0);
  void accumulate(std::int32_t input, const Mat& contribution);
  void backprop_node(std::size_t i);

  std::vector<Node> nodes_;
};

// ---- primitive set ----------------------------------------------------------
// Binary elementwise ops accept a second operand of matching shape, a 1xC row
// (broadcast down rows), an Rx1 column (broadcast across columns), or a 1x1
// scalar. Shape mismatches throw std::invalid_argument naming both shapes.

Var matmul(Var a, Var b);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);  // elementwise
Var operator/(Var a, Var b);  // elementwise
Var tanh(Var v);
Var sigmoid(Var v);
Var exp(Var v);
Var log(Var v);  // throws on non-positive input
Var sqrt(Var v);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var v, Index start, Index n);
Var softmax_rows(Var v);
Var masked_softmax_rows(Var v, Var mask);
Var masked_log_softmax_rows(Var v, Var mask);
Var row_mean(Var v);                   // -> Rx1
Var row_var(Var v);                    // population variance -> Rx1
Var masked_row_mean(Var v, Var mask);  // mean over valid entries -> Rx1
Var row_standardize(Var v, Real eps);  // (x - rowmean) / (rowstd + eps)
Var sum(Var v);                        // -> 1x1
Var scale(Var v, Real alpha);

inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

}  // namespace acrm
