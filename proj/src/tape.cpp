#include "tagrpo/tape.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace tagrpo {

namespace {

[[noreturn]] void fail(const std::string& what) { throw std::runtime_error(what); }

void require(bool ok, Op op, const std::string& what) {
  if (!ok) {
    std::ostringstream os;
    os << op_name(op) << ": " << what;
    fail(os.str());
  }
}

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require_same_shape(Op op, const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), op,
          "shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

Tensor::Tensor(Matrix v, bool requires_g) : value(std::move(v)), requires_grad(requires_g) {
  if (!value.allFinite()) fail("Tensor: non-finite value at construction");
}

void Tensor::ensure_grad() {
  if (!has_grad()) grad = Matrix::Zero(value.rows(), value.cols());
}

const Matrix& Var::value() const { return tape->node(idx).val(); }

double Var::scalar() const {
  const Matrix& m = value();
  if (m.size() != 1) fail("Var::scalar: value is " + shape_str(m) + ", expected 1x1");
  return m(0, 0);
}

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConst: return "constant";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kMatMul: return "matmul";
    case Op::kAddColwise: return "add_colwise";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kNeg: return "neg";
    case Op::kTanh: return "tanh";
    case Op::kSilu: return "silu";
    case Op::kSquare: return "square";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kClip: return "clip";
    case Op::kMinimum: return "minimum";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kConcatRows: return "concat_rows";
    case Op::kCols: return "gather_cols";
  }
  return "?";
}

void Tape::check_finite(const Node& n) const {
  if (!n.val().allFinite())
    fail(std::string("non-finite value produced by op '") + op_name(n.op) + "'");
}

Var Tape::push(Node n) {
  check_finite(n);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor& t) {
  Node n;
  n.op = Op::kLeaf;
  n.external = &t.value;
  if (grad_enabled_ && t.requires_grad) {
    n.sink = &t;
    n.needs_grad = true;
  }
  return push(std::move(n));
}

Var Tape::leaf(const Tensor& t) {
  Node n;
  n.op = Op::kLeaf;
  n.external = &t.value;
  return push(std::move(n));
}

Var Tape::constant_ref(const Matrix& m) {
  Node n;
  n.op = Op::kConst;
  n.external = &m;
  return push(std::move(n));
}

Var Tape::constant(Matrix m) {
  Node n;
  n.op = Op::kConst;
  n.value = std::move(m);
  return push(std::move(n));
}

namespace {

Tape::Node make_node(Op op, Var a, Var b) {
  Tape::Node n;
  n.op = op;
  n.a = a.idx;
  n.b = b.idx;
  return n;
}

Tape* same_tape(Var a, Var b) {
  if (a.tape != b.tape) fail("op arguments come from different tapes");
  return a.tape;
}

bool propagate(Tape* t, int a, int b = -1) {
  bool need = false;
  if (a >= 0) need = need || t->node(a).needs_grad;
  if (b >= 0) need = need || t->node(b).needs_grad;
  return t->grad_enabled() && need;
}

}  // namespace

// The op builders need push(); route them through member-friended free funcs.
Var add(Var a, Var b) {
  Tape* t = same_tape(a, b);
  require_same_shape(Op::kAdd, a.value(), b.value());
  auto n = make_node(Op::kAdd, a, b);
  n.value = a.value() + b.value();
  n.needs_grad = propagate(t, n.a, n.b);
  return t->push(std::move(n));
}

Var sub(Var a, Var b) {
  Tape* t = same_tape(a, b);
  require_same_shape(Op::kSub, a.value(), b.value());
  auto n = make_node(Op::kSub, a, b);
  n.value = a.value() - b.value();
  n.needs_grad = propagate(t, n.a, n.b);
  return t->push(std::move(n));
}

Var mul(Var a, Var b) {
  Tape* t = same_tape(a, b);
  require_same_shape(Op::kMul, a.value(), b.value());
  auto n = make_node(Op::kMul, a, b);
  n.value = a.value().cwiseProduct(b.value());
  n.needs_grad = propagate(t, n.a, n.b);
  return t->push(std::move(n));
}

Var matmul(Var a, Var b) {
  Tape* t = same_tape(a, b);
  require(a.value().cols() == b.value().rows(), Op::kMatMul,
          "inner dimensions differ: " + shape_str(a.value()) + " * " + shape_str(b.value()));
  auto n = make_node(Op::kMatMul, a, b);
  n.value = a.value() * b.value();
  n.needs_grad = propagate(t, n.a, n.b);
  return t->push(std::move(n));
}

Var add_colwise(Var m, Var bias) {
  Tape* t = same_tape(m, bias);
  require(bias.value().cols() == 1 && bias.value().rows() == m.value().rows(), Op::kAddColwise,
          "bias must be " + std::to_string(m.value().rows()) + "x1, got " + shape_str(bias.value()));
  auto n = make_node(Op::kAddColwise, m, bias);
  n.value = m.value().colwise() + Eigen::VectorXd(bias.value().col(0));
  n.needs_grad = propagate(t, n.a, n.b);
  return t->push(std::move(n));
}

Var scale(Var a, double s) {
  Tape* t = a.tape;
  auto n = make_node(Op::kScale, a, Var{});
  n.s0 = s;
  n.value = s * a.value();
  n.needs_grad = propagate(t, n.a);
  return t->push(std::move(n));
}

Var add_scalar(Var a, double s) {
  Tape* t = a.tape;
  auto n = make_node(Op::kAddScalar, a, Var{});
  n.s0 = s;
  n.value = a.value().array() + s;
  n.needs_grad = propagate(t, n.a);
  return t->push(std::move(n));
}

Var neg(Var a) {
  Tape* t = a.tape;
  auto n = make_node(Op::kNeg, a, Var{});
  n.value = -a.value();
  n.needs_grad = propagate(t, n.a);
  return t->push(std::move(n));
}

Var tanh(Var a) {
  Tape* t = a.tape;
  auto n = make_node(Op::kTanh, a, Var{});
  n.value = a.value().array().tanh();
  n.needs_grad = propagate(t, n.a);
  return t->push(std::move(n));
}

Var silu(Var a) {
  Tape* t = a.tape;
  auto n = make_node(Op::kSilu, a, Var{});
  n.value = a.value().array() / (1.0 + (-a.value().array()).exp());
  n.needs_grad = propagate(t, n.a);
  return t->push(std::move(n));
}

Var square(Var a) {
  Tape* t = a.tape;
  auto n = make_node(Op::kSquare, a, Var{});
  n.value = a.value().array().square();
  n.needs_grad = propagate(t, n.a);
  return t->push(std::move(n));
}

Var exp(Var a) {
  Tape* t = a.tape;
  auto n = make_node(Op::kExp, a, Var{});
  n.value = a.value().array().exp();
  n.needs_grad = propagate(t, n.a);
  return t->push(std::move(n));
}

Var log(Var a) {
  Tape* t = a.tape;
  auto n = make_node(Op::kLog, a, Var{});
  n.value = a.value().array().log();
  n.needs_grad = propagate(t, n.a);
  return t->push(std::move(n));
}

Var clip(Var a, double lo, double hi) {
  Tape* t = a.tape;
  if (lo > hi) fail("clip: lo > hi");
  auto n = make_node(Op::kClip, a, Var{});
  n.s0 = lo;
  n.s1 = hi;
  n.value = a.value().array().max(lo).min(hi);
  n.needs_grad = propagate(t, n.a);
  return t->push(std::move(n));
}

Var minimum(Var a, Var b) {
  Tape* t = same_tape(a, b);
  require_same_shape(Op::kMinimum, a.value(), b.value());
  auto n = make_node(Op::kMinimum, a, b);
  n.value = a.value().cwiseMin(b.value());
  n.needs_grad = propagate(t, n.a, n.b);
  return t->push(std::move(n));
}

Var sum(Var a) {
  Tape* t = a.tape;
  auto n = make_node(Op::kSum, a, Var{});
  n.value = Matrix::Constant(1, 1, a.value().sum());
  n.needs_grad = propagate(t, n.a);
  return t->push(std::move(n));
}

Var mean(Var a) {
  Tape* t = a.tape;
  require(a.value().size() > 0, Op::kMean, "mean of empty matrix");
  auto n = make_node(Op::kMean, a, Var{});
  n.value = Matrix::Constant(1, 1, a.value().mean());
  n.needs_grad = propagate(t, n.a);
  return t->push(std::move(n));
}

Var concat_rows(Var a, Var b) {
  Tape* t = same_tape(a, b);
  require(a.value().cols() == b.value().cols(), Op::kConcatRows,
          "column counts differ: " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  auto n = make_node(Op::kConcatRows, a, b);
  n.value.resize(a.value().rows() + b.value().rows(), a.value().cols());
  n.value.topRows(a.value().rows()) = a.value();
  n.value.bottomRows(b.value().rows()) = b.value();
  n.needs_grad = propagate(t, n.a, n.b);
  return t->push(std::move(n));
}

Var gather_cols(Var m, const std::vector<int>& cols) {
  Tape* t = m.tape;
  auto n = make_node(Op::kCols, m, Var{});
  n.cols = cols;
  n.value.resize(m.value().rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    require(cols[j] >= 0 && cols[j] < m.value().cols(), Op::kCols,
            "column index " + std::to_string(cols[j]) + " out of range");
    n.value.col(static_cast<Eigen::Index>(j)) = m.value().col(cols[j]);
  }
  n.needs_grad = propagate(t, n.a);
  return t->push(std::move(n));
}

double Tape::backward(Var root) {
  if (root.tape != this) fail("backward: root belongs to a different tape");
  const Matrix& rv = node(root.idx).val();
  if (rv.size() != 1) fail("backward: root is " + shape_str(rv) + ", expected a 1x1 scalar");
  if (!grad_enabled_) fail("backward: tape was built with gradients disabled");

  auto grad_of = [&](int i) -> Matrix& {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.val().rows(), n.val().cols());
    return n.grad;
  };

  grad_of(root.idx)(0, 0) = 1.0;

  for (int i = root.idx; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    const Matrix& g = n.grad;
    auto want = [&](int j) { return j >= 0 && nodes_[static_cast<std::size_t>(j)].needs_grad; };
    switch (n.op) {
      case Op::kLeaf:
        if (n.sink) {
          n.sink->ensure_grad();
          n.sink->grad += g;
        }
        break;
      case Op::kConst:
        break;
      case Op::kAdd:
        if (want(n.a)) grad_of(n.a) += g;
        if (want(n.b)) grad_of(n.b) += g;
        break;
      case Op::kSub:
        if (want(n.a)) grad_of(n.a) += g;
        if (want(n.b)) grad_of(n.b) -= g;
        break;
      case Op::kMul:
        if (want(n.a)) grad_of(n.a) += g.cwiseProduct(node(n.b).val());
        if (want(n.b)) grad_of(n.b) += g.cwiseProduct(node(n.a).val());
        break;
      case Op::kMatMul:
        if (want(n.a)) grad_of(n.a) += g * node(n.b).val().transpose();
        if (want(n.b)) grad_of(n.b) += node(n.a).val().transpose() * g;
        break;
      case Op::kAddColwise:
        if (want(n.a)) grad_of(n.a) += g;
        if (want(n.b)) grad_of(n.b) += g.rowwise().sum();
        break;
      case Op::kScale:
        if (want(n.a)) grad_of(n.a) += n.s0 * g;
        break;
      case Op::kAddScalar:
        if (want(n.a)) grad_of(n.a) += g;
        break;
      case Op::kNeg:
        if (want(n.a)) grad_of(n.a) -= g;
        break;
      case Op::kTanh:
        if (want(n.a)) grad_of(n.a).array() += g.array() * (1.0 - n.val().array().square());
        break;
      case Op::kSilu: {
        if (want(n.a)) {
          const auto x = node(n.a).val().array();
          const auto sig = 1.0 / (1.0 + (-x).exp());
          grad_of(n.a).array() += g.array() * sig * (1.0 + x * (1.0 - sig));
        }
        break;
      }
      case Op::kSquare:
        if (want(n.a)) grad_of(n.a).array() += 2.0 * g.array() * node(n.a).val().array();
        break;
      case Op::kExp:
        if (want(n.a)) grad_of(n.a).array() += g.array() * n.val().array();
        break;
      case Op::kLog:
        if (want(n.a)) grad_of(n.a).array() += g.array() / node(n.a).val().array();
        break;
      case Op::kClip: {
        if (want(n.a)) {
          const auto x = node(n.a).val().array();
          grad_of(n.a).array() +=
              g.array() * ((x >= n.s0 && x <= n.s1).cast<double>());
        }
        break;
      }
      case Op::kMinimum: {
        const auto mask = (node(n.a).val().array() <= node(n.b).val().array()).cast<double>();
        if (want(n.a)) grad_of(n.a).array() += g.array() * mask;
        if (want(n.b)) grad_of(n.b).array() += g.array() * (1.0 - mask);
        break;
      }
      case Op::kSum:
        if (want(n.a)) grad_of(n.a).array() += g(0, 0);
        break;
      case Op::kMean:
        if (want(n.a))
          grad_of(n.a).array() += g(0, 0) / static_cast<double>(node(n.a).val().size());
        break;
      case Op::kConcatRows:
        if (want(n.a)) grad_of(n.a) += g.topRows(node(n.a).val().rows());
        if (want(n.b)) grad_of(n.b) += g.bottomRows(node(n.b).val().rows());
        break;
      case Op::kCols:
        if (want(n.a)) {
          Matrix& ga = grad_of(n.a);
          for (std::size_t j = 0; j < n.cols.size(); ++j)
            ga.col(n.cols[j]) += g.col(static_cast<Eigen::Index>(j));
        }
        break;
    }
  }
  return rv(0, 0);
}

}  // namespace tagrpo
