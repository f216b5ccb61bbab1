#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "tagrpo/types.hpp"

namespace tagrpo {

// A named dense value, optionally carrying an accumulated gradient. Shapes are
// fixed at construction; values must be finite.
struct Tensor {
  Matrix value;
  Matrix grad;  // empty until a backward pass touches it
  bool requires_grad = false;

  Tensor() = default;
  Tensor(Matrix v, bool requires_g);

  bool has_grad() const { return grad.size() > 0; }
  void ensure_grad();  // allocates and zeroes grad storage
  void zero_grad() { if (has_grad()) grad.setZero(); }
};

class Tape;

// Lightweight handle into a tape. Valid for the tape's lifetime.
struct Var {
  Tape* tape = nullptr;
  int idx = -1;
  const Matrix& value() const;
  int rows() const { return static_cast<int>(value().rows()); }
  int cols() const { return static_cast<int>(value().cols()); }
  double scalar() const;  // requires a 1x1 value
};

enum class Op : std::uint8_t {
  kLeaf, kConst, kAdd, kSub, kMul, kMatMul, kAddColwise, kScale, kAddScalar,
  kNeg, kTanh, kSilu, kSquare, kExp, kLog, kClip, kMinimum, kSum, kMean,
  kConcatRows, kCols,
};

const char* op_name(Op op);

// Append-only reverse-mode tape. Records every primitive applied through the
// free functions below, checks results for finiteness, and on backward()
// accumulates gradients into the Tensors that were registered as leaves.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  // Leaf over external storage; no copy. If grad is enabled and the tensor
  // requires it, backward() accumulates into t.grad.
  Var leaf(Tensor& t);
  // Read-only leaf; never receives gradient (frozen parameter stores).
  Var leaf(const Tensor& t);
  // Constant by reference; caller keeps m alive for the tape's lifetime.
  Var constant_ref(const Matrix& m);
  // Constant by value (for temporaries).
  Var constant(Matrix m);
  Var constant(const Vector& v) { return constant(as_column(v)); }

  // Seeds root (must be 1x1) with 1 and propagates. Returns the root value.
  // Gradients accumulate into leaf tensors until their owner zeroes them.
  double backward(Var root);

  struct Node {
    Matrix value;                    // owned result (empty when external)
    const Matrix* external = nullptr;
    Matrix grad;
    Op op = Op::kConst;
    int a = -1, b = -1;
    double s0 = 0.0, s1 = 0.0;       // scalar operands (scale factor, clip bounds, ...)
    std::vector<int> cols;           // column indices for kCols
    Tensor* sink = nullptr;          // leaf write-back target
    bool needs_grad = false;
    const Matrix& val() const { return external ? *external : value; }
  };

  const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }

 private:
  friend Var add(Var, Var);
  friend Var sub(Var, Var);
  friend Var mul(Var, Var);
  friend Var matmul(Var, Var);
  friend Var add_colwise(Var, Var);
  friend Var scale(Var, double);
  friend Var add_scalar(Var, double);
  friend Var neg(Var);
  friend Var tanh(Var);
  friend Var silu(Var);
  friend Var square(Var);
  friend Var exp(Var);
  friend Var log(Var);
  friend Var clip(Var, double, double);
  friend Var minimum(Var, Var);
  friend Var sum(Var);
  friend Var mean(Var);
  friend Var concat_rows(Var, Var);
  friend Var gather_cols(Var, const std::vector<int>&);

  Var push(Node n);
  void check_finite(const Node& n) const;

  // deque keeps node references stable while the tape grows, so values
  // returned by Var::value() stay valid as later ops are recorded.
  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
};

// Primitive ops. Shapes are validated; results are checked finite and the
// offending op is named in any error.
Var add(Var a, Var b);            // elementwise
Var sub(Var a, Var b);
Var mul(Var a, Var b);            // elementwise (Hadamard)
Var matmul(Var a, Var b);
Var add_colwise(Var m, Var bias); // bias is c x 1, broadcast over columns
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);
Var tanh(Var a);
Var silu(Var a);                  // x * sigmoid(x)
Var square(Var a);
Var exp(Var a);
Var log(Var a);
Var clip(Var a, double lo, double hi);  // gradient is zero where the input is clipped
Var minimum(Var a, Var b);        // elementwise; ties take a's gradient
Var sum(Var a);                   // -> 1x1
Var mean(Var a);                  // -> 1x1
Var concat_rows(Var a, Var b);    // stack vertically
Var gather_cols(Var m, const std::vector<int>& cols);  // embedding lookup

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return neg(a); }

// Evaluates a scalar expression and writes gradients into every requires_grad
// leaf registered on the tape. Returns the scalar value.
inline double evaluate_and_backward(Tape& tape, Var root) { return tape.backward(root); }

}  // namespace tagrpo
