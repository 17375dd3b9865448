#include "acrm/tape.hpp"

#include "acrm/linalg.hpp"

#include <cmath>
#include <limits>
#include <utility>

namespace acrm {

namespace detail {
// Private plumbing shared by the free-function primitives below.
struct TapeOps {
  static std::int32_t id(Var v) { return v.id_; }
  static Var emit(Tape& t, Op op, Mat value, std::vector<std::int32_t> inputs,
                  std::int32_t aux0 = 0, std::int32_t aux1 = 0, Real alpha = 0) {
    return t.emit(op, std::move(value), std::move(inputs), aux0, aux1, alpha);
  }
};
}  // namespace detail

using detail::TapeOps;

namespace {

// Broadcast codes for the second operand of binary elementwise ops.
constexpr std::int32_t kSame = 0;
constexpr std::int32_t kRow = 1;  // 1xC against RxC
constexpr std::int32_t kCol = 2;  // Rx1 against RxC
constexpr std::int32_t kScalar = 3;

std::int32_t broadcast_code(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return kSame;
  if (b.rows() == 1 && b.cols() == 1) return kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return kRow;
  if (b.cols() == 1 && b.rows() == a.rows()) return kCol;
  throw std::invalid_argument(
      cat(op, ": shapes ", shape_str(a), " vs ", shape_str(b), " do not conform"));
}

Mat broadcast_to(const Mat& b, Index rows, Index cols, std::int32_t code) {
  switch (code) {
    case kSame: return b;
    case kRow: return b.replicate(rows, 1);
    case kCol: return b.replicate(1, cols);
    default: return Mat::Constant(rows, cols, b(0, 0));
  }
}

// Folds a full-shaped adjoint back onto the broadcast operand's shape.
Mat reduce_from(const Mat& g, std::int32_t code) {
  switch (code) {
    case kSame: return g;
    case kRow: return g.colwise().sum();
    case kCol: return g.rowwise().sum();
    default: return Mat::Constant(1, 1, g.sum());
  }
}

Tape& same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape())
    throw std::invalid_argument(cat(op, ": operands live on different tapes"));
  return a.tape();
}

}  // namespace

const Mat& Var::value() const { return tape_->value(*this); }

Real Var::scalar() const {
  const Mat& m = value();
  if (m.rows() != 1 || m.cols() != 1)
    throw std::invalid_argument(cat("scalar() on tensor of shape ", shape_str(m)));
  return m(0, 0);
}

Var Tape::emit(Op op, Mat value, std::vector<std::int32_t> inputs, std::int32_t aux0,
               std::int32_t aux1, Real alpha) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.aux0 = aux0;
  n.aux1 = aux1;
  n.alpha = alpha;
  n.requires_grad = (op == Op::kLeaf);
  for (std::int32_t in : n.inputs)
    if (nodes_[static_cast<std::size_t>(in)].requires_grad) n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

Var Tape::leaf(Mat value) { return emit(Op::kLeaf, std::move(value), {}); }

Var Tape::constant(Mat value) { return emit(Op::kConstant, std::move(value), {}); }

Mat Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::clear() { nodes_.clear(); }

void Tape::accumulate(std::int32_t input, const Mat& contribution) {
  Node& n = nodes_[static_cast<std::size_t>(input)];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  n.grad += contribution;
}

void Tape::backward(Var loss) {
  const Node& ln = node(loss);
  if (ln.value.rows() != 1 || ln.value.cols() != 1)
    throw std::invalid_argument(
        cat("backward: loss must be scalar, got ", shape_str(ln.value)));
  for (Node& n : nodes_) n.grad.resize(0, 0);
  const auto loss_idx = static_cast<std::size_t>(TapeOps::id(loss));
  nodes_[loss_idx].grad = Mat::Ones(1, 1);
  for (std::size_t i = loss_idx + 1; i-- > 0;) backprop_node(i);
}

void Tape::backprop_node(std::size_t i) {
  Node& n = nodes_[i];
  if (!n.requires_grad || n.grad.size() == 0) return;
  const Mat& g = n.grad;
  auto in = [&](int k) -> const Mat& {
    return nodes_[static_cast<std::size_t>(n.inputs[static_cast<std::size_t>(k)])].value;
  };
  switch (n.op) {
    case Op::kConstant:
    case Op::kLeaf:
      break;
    case Op::kMatMul:
      accumulate(n.inputs[0], g * in(1).transpose());
      accumulate(n.inputs[1], in(0).transpose() * g);
      break;
    case Op::kAdd:
      accumulate(n.inputs[0], g);
      accumulate(n.inputs[1], reduce_from(g, n.aux0));
      break;
    case Op::kSub:
      accumulate(n.inputs[0], g);
      accumulate(n.inputs[1], reduce_from(-g, n.aux0));
      break;
    case Op::kMul: {
      const Mat b = broadcast_to(in(1), n.value.rows(), n.value.cols(), n.aux0);
      accumulate(n.inputs[0], g.cwiseProduct(b));
      accumulate(n.inputs[1], reduce_from(g.cwiseProduct(in(0)), n.aux0));
      break;
    }
    case Op::kDiv: {
      const Mat b = broadcast_to(in(1), n.value.rows(), n.value.cols(), n.aux0);
      accumulate(n.inputs[0], g.cwiseQuotient(b));
      accumulate(n.inputs[1],
                 reduce_from((-g.array() * n.value.array() / b.array()).matrix(), n.aux0));
      break;
    }
    case Op::kTanh:
      accumulate(n.inputs[0], (g.array() * (1.0 - n.value.array().square())).matrix());
      break;
    case Op::kSigmoid:
      accumulate(n.inputs[0],
                 (g.array() * n.value.array() * (1.0 - n.value.array())).matrix());
      break;
    case Op::kExp:
      accumulate(n.inputs[0], g.cwiseProduct(n.value));
      break;
    case Op::kLog:
      accumulate(n.inputs[0], g.cwiseQuotient(in(0)));
      break;
    case Op::kSqrt:
      accumulate(n.inputs[0], (g.array() / (2.0 * n.value.array())).matrix());
      break;
    case Op::kConcatCols: {
      Index off = 0;
      for (std::int32_t input : n.inputs) {
        const Index w = nodes_[static_cast<std::size_t>(input)].value.cols();
        accumulate(input, g.middleCols(off, w));
        off += w;
      }
      break;
    }
    case Op::kSliceCols: {
      Mat dg = Mat::Zero(in(0).rows(), in(0).cols());
      dg.middleCols(n.aux0, n.aux1) = g;
      accumulate(n.inputs[0], dg);
      break;
    }
    case Op::kSoftmaxRows: {
      const Mat& y = n.value;
      Mat dx(y.rows(), y.cols());
      for (Index r = 0; r < y.rows(); ++r) {
        const Real dot = g.row(r).dot(y.row(r));
        dx.row(r) = y.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
      }
      accumulate(n.inputs[0], dx);
      break;
    }
    case Op::kMaskedSoftmaxRows: {
      const Mat& y = n.value;
      const Mat& mask = in(1);
      Mat dx(y.rows(), y.cols());
      for (Index r = 0; r < y.rows(); ++r) {
        const Real dot = g.row(r).dot(y.row(r));  // masked y entries are 0
        dx.row(r) = mask.row(r)
                        .cwiseProduct(y.row(r))
                        .cwiseProduct((g.row(r).array() - dot).matrix());
      }
      accumulate(n.inputs[0], dx);
      break;
    }
    case Op::kMaskedLogSoftmaxRows: {
      const Mat& mask = in(1);
      Mat dx = Mat::Zero(n.value.rows(), n.value.cols());
      for (Index r = 0; r < n.value.rows(); ++r) {
        Real gsum = 0;
        for (Index c = 0; c < n.value.cols(); ++c)
          if (mask(r, c) != Real(0)) gsum += g(r, c);
        for (Index c = 0; c < n.value.cols(); ++c)
          if (mask(r, c) != Real(0))
            dx(r, c) = g(r, c) - std::exp(n.value(r, c)) * gsum;
      }
      accumulate(n.inputs[0], dx);
      break;
    }
    case Op::kRowMean: {
      const Real inv_n = 1.0 / static_cast<Real>(in(0).cols());
      accumulate(n.inputs[0], (g * inv_n).replicate(1, in(0).cols()));
      break;
    }
    case Op::kRowVar: {
      const Mat& x = in(0);
      const Real inv_n = 1.0 / static_cast<Real>(x.cols());
      Mat centered = x.colwise() - x.rowwise().mean();
      Mat dx = (2.0 * inv_n) * (centered.array().colwise() * g.col(0).array()).matrix();
      accumulate(n.inputs[0], dx);
      break;
    }
    case Op::kMaskedRowMean: {
      const Mat& mask = in(1);
      Mat dx(mask.rows(), mask.cols());
      for (Index r = 0; r < mask.rows(); ++r) {
        const Real cnt = mask.row(r).sum();
        dx.row(r) = mask.row(r) * (g(r, 0) / cnt);
      }
      accumulate(n.inputs[0], dx);
      break;
    }
    case Op::kRowStandardize: {
      // y = (x - mu) / (s + eps), s = population std. At s == 0 the map is
      // flat in the constant direction; the second term is dropped there.
      const Mat& x = in(0);
      const Real eps = n.alpha;
      const Real inv_n = 1.0 / static_cast<Real>(x.cols());
      Mat dx(x.rows(), x.cols());
      for (Index r = 0; r < x.rows(); ++r) {
        const Real mu = x.row(r).mean();
        const Real s = std::sqrt((x.row(r).array() - mu).square().sum() * inv_n);
        const Real gbar = g.row(r).mean();
        dx.row(r) = ((g.row(r).array() - gbar) / (s + eps)).matrix();
        if (s > 0) {
          const Real gz = g.row(r).dot(n.value.row(r));
          dx.row(r) -= n.value.row(r) * (gz * inv_n / s);
        }
      }
      accumulate(n.inputs[0], dx);
      break;
    }
    case Op::kSum:
      accumulate(n.inputs[0], Mat::Constant(in(0).rows(), in(0).cols(), g(0, 0)));
      break;
    case Op::kScale:
      accumulate(n.inputs[0], g * n.alpha);
      break;
  }
}

// ---- forward primitives -----------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  const Mat& av = a.value();
  const Mat& bv = b.value();
  if (av.cols() != bv.rows())
    throw std::invalid_argument(
        cat("matmul: shapes ", shape_str(av), " vs ", shape_str(bv), " do not conform"));
  return TapeOps::emit(t, Op::kMatMul, av * bv, {TapeOps::id(a), TapeOps::id(b)});
}

namespace {

Var binary(Op op, const char* name, Var a, Var b) {
  Tape& t = same_tape(a, b, name);
  const Mat& av = a.value();
  const Mat& bv = b.value();
  const std::int32_t code = broadcast_code(av, bv, name);
  Mat out;
  auto combine = [op](const auto& lhs, const auto& rhs) -> Mat {
    switch (op) {
      case Op::kAdd: return (lhs + rhs).matrix();
      case Op::kSub: return (lhs - rhs).matrix();
      case Op::kMul: return (lhs * rhs).matrix();
      default: return (lhs / rhs).matrix();
    }
  };
  switch (code) {
    case kSame: out = combine(av.array(), bv.array()); break;
    case kRow: out = combine(av.array(), bv.array().row(0).replicate(av.rows(), 1)); break;
    case kCol: out = combine(av.array(), bv.array().col(0).replicate(1, av.cols())); break;
    default: out = combine(av.array(), bv(0, 0)); break;
  }
  return TapeOps::emit(t, op, std::move(out), {TapeOps::id(a), TapeOps::id(b)}, code);
}

Var unary(Op op, Var v, Mat out, Real alpha = 0) {
  return TapeOps::emit(v.tape(), op, std::move(out), {TapeOps::id(v)}, 0, 0, alpha);
}

}  // namespace

Var operator+(Var a, Var b) { return binary(Op::kAdd, "add", a, b); }
Var operator-(Var a, Var b) { return binary(Op::kSub, "sub", a, b); }
Var operator*(Var a, Var b) { return binary(Op::kMul, "mul", a, b); }
Var operator/(Var a, Var b) { return binary(Op::kDiv, "div", a, b); }

Var tanh(Var v) { return unary(Op::kTanh, v, v.value().array().tanh().matrix()); }

Var sigmoid(Var v) {
  return unary(Op::kSigmoid, v, (1.0 / (1.0 + (-v.value().array()).exp())).matrix());
}

Var exp(Var v) { return unary(Op::kExp, v, v.value().array().exp().matrix()); }

Var log(Var v) {
  if ((v.value().array() <= 0).any())
    throw std::invalid_argument("log: non-positive input");
  return unary(Op::kLog, v, v.value().array().log().matrix());
}

Var sqrt(Var v) {
  if ((v.value().array() < 0).any())
    throw std::invalid_argument("sqrt: negative input");
  return unary(Op::kSqrt, v, v.value().array().sqrt().matrix());
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Tape& t = parts[0].tape();
  const Index rows = parts[0].rows();
  Index cols = 0;
  std::vector<std::int32_t> inputs;
  inputs.reserve(parts.size());
  for (const Var& p : parts) {
    if (&p.tape() != &t) throw std::invalid_argument("concat_cols: mixed tapes");
    if (p.rows() != rows)
      throw std::invalid_argument(cat("concat_cols: ", shape_str(p.value()), " vs ",
                                      shape_str(parts[0].value()), " differ in rows"));
    cols += p.cols();
    inputs.push_back(TapeOps::id(p));
  }
  Mat out(rows, cols);
  Index off = 0;
  for (const Var& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  return TapeOps::emit(t, Op::kConcatCols, std::move(out), std::move(inputs));
}

Var slice_cols(Var v, Index start, Index n) {
  const Mat& x = v.value();
  if (start < 0 || n <= 0 || start + n > x.cols())
    throw std::invalid_argument(
        cat("slice_cols: [", start, ", ", start + n, ") out of ", shape_str(x)));
  return TapeOps::emit(v.tape(), Op::kSliceCols, x.middleCols(start, n),
                       {TapeOps::id(v)}, static_cast<std::int32_t>(start),
                       static_cast<std::int32_t>(n));
}

Var softmax_rows(Var v) {
  return unary(Op::kSoftmaxRows, v, softmax_rows(v.value()));
}

Var masked_softmax_rows(Var v, Var mask) {
  Tape& t = same_tape(v, mask, "masked_softmax");
  return TapeOps::emit(t, Op::kMaskedSoftmaxRows,
                       masked_softmax_rows(v.value(), mask.value()),
                       {TapeOps::id(v), TapeOps::id(mask)});
}

Var masked_log_softmax_rows(Var v, Var mask) {
  Tape& t = same_tape(v, mask, "masked_log_softmax");
  return TapeOps::emit(t, Op::kMaskedLogSoftmaxRows,
                       masked_log_softmax_rows(v.value(), mask.value()),
                       {TapeOps::id(v), TapeOps::id(mask)});
}

Var row_mean(Var v) { return unary(Op::kRowMean, v, v.value().rowwise().mean()); }

Var row_var(Var v) {
  const Mat& x = v.value();
  const Real inv_n = 1.0 / static_cast<Real>(x.cols());
  Mat out(x.rows(), 1);
  for (Index r = 0; r < x.rows(); ++r) {
    const Real mu = x.row(r).mean();
    out(r, 0) = (x.row(r).array() - mu).square().sum() * inv_n;
  }
  return unary(Op::kRowVar, v, std::move(out));
}

Var masked_row_mean(Var v, Var mask) {
  Tape& t = same_tape(v, mask, "masked_row_mean");
  const Mat& x = v.value();
  const Mat& m = mask.value();
  if (x.rows() != m.rows() || x.cols() != m.cols())
    throw std::invalid_argument(cat("masked_row_mean: shapes ", shape_str(x), " vs ",
                                    shape_str(m), " do not conform"));
  Mat out(x.rows(), 1);
  for (Index r = 0; r < x.rows(); ++r) {
    const Real cnt = m.row(r).sum();
    if (cnt == 0)
      throw std::invalid_argument(
          cat("masked_row_mean: row ", r, " has no valid entries"));
    out(r, 0) = x.row(r).cwiseProduct(m.row(r)).sum() / cnt;
  }
  return TapeOps::emit(t, Op::kMaskedRowMean, std::move(out),
                       {TapeOps::id(v), TapeOps::id(mask)});
}

Var row_standardize(Var v, Real eps) {
  return unary(Op::kRowStandardize, v, standardize_rows(v.value(), eps), eps);
}

Var sum(Var v) {
  return unary(Op::kSum, v, Mat::Constant(1, 1, v.value().sum()));
}

Var scale(Var v, Real alpha) {
  return unary(Op::kScale, v, (v.value() * alpha).eval(), alpha);
}

}  // namespace acrm
