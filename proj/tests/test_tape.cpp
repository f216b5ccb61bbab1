#include <doctest.h>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "support/oracles.hpp"
#include "tagrpo/grad_check.hpp"
#include "tagrpo/param_store.hpp"
#include "tagrpo/rng.hpp"
#include "tagrpo/tape.hpp"

using namespace tagrpo;
using testsup::max_rel_err;
using testsup::numeric_grad;

namespace {

Matrix row3(double a, double b, double c) {
  Matrix m(3, 1);
  m << a, b, c;
  return m;
}

// Weighted scalar reduction so gradients are non-uniform across entries.
Var weighted_sum(Tape& tape, Var y, const Matrix& w) { return sum(mul(y, tape.constant(w))); }

using Unary = std::function<Var(Tape&, Var)>;
using Binary = std::function<Var(Tape&, Var, Var)>;

// FD check of a unary primitive on `trials` random inputs. `shape_rows/cols`
// give the leaf shape; `prep` may nudge samples away from kinks.
void check_unary(const Unary& op, int rows, int cols, std::uint64_t seed,
                 const std::function<void(Matrix&)>& prep = {}, int trials = 100) {
  Rng rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    Matrix x = rng.normal_matrix(rows, cols);
    if (prep) prep(x);
    Matrix w;
    {
      Tensor probe(x, false);
      Tape t0(false);
      Var shaped = op(t0, t0.leaf(probe));
      w = rng.normal_matrix(shaped.rows(), shaped.cols());
    }
    auto value = [&](const Matrix& xin) {
      Tensor tx(xin, false);
      Tape tape(false);
      return weighted_sum(tape, op(tape, tape.leaf(tx)), w).scalar();
    };
    Tensor tx(x, true);
    Tape tape;
    tape.backward(weighted_sum(tape, op(tape, tape.leaf(tx)), w));
    worst = std::max(worst, max_rel_err(tx.grad, numeric_grad(value, x)));
  }
  CHECK(worst < 1e-4);
}

// FD check of a binary primitive against both operands.
void check_binary(const Binary& op, int ar, int ac, int br, int bc, std::uint64_t seed,
                  const std::function<void(Matrix&, Matrix&)>& prep = {}, int trials = 100) {
  Rng rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    Matrix a = rng.normal_matrix(ar, ac);
    Matrix b = rng.normal_matrix(br, bc);
    if (prep) prep(a, b);
    Matrix w;
    {
      Tensor pa(a, false), pb(b, false);
      Tape t0(false);
      Var shaped = op(t0, t0.leaf(pa), t0.leaf(pb));
      w = rng.normal_matrix(shaped.rows(), shaped.cols());
    }
    auto value_a = [&](const Matrix& ain) {
      Tensor ta(ain, false), tb(b, false);
      Tape tape(false);
      return weighted_sum(tape, op(tape, tape.leaf(ta), tape.leaf(tb)), w).scalar();
    };
    auto value_b = [&](const Matrix& bin) {
      Tensor ta(a, false), tb(bin, false);
      Tape tape(false);
      return weighted_sum(tape, op(tape, tape.leaf(ta), tape.leaf(tb)), w).scalar();
    };
    Tensor ta(a, true), tb(b, true);
    Tape tape;
    tape.backward(weighted_sum(tape, op(tape, tape.leaf(ta), tape.leaf(tb)), w));
    worst = std::max(worst, max_rel_err(ta.grad, numeric_grad(value_a, a)));
    worst = std::max(worst, max_rel_err(tb.grad, numeric_grad(value_b, b)));
  }
  CHECK(worst < 1e-4);
}

}  // namespace

TEST_CASE("quadratic value and gradient") {
  Tensor w(row3(1, 2, 3), true);
  Tape tape;
  Var vw = tape.leaf(w);
  double value = tape.backward(sum(mul(vw, vw)));
  CHECK(value == 14.0);
  CHECK(w.grad == row3(2, 4, 6));
}

TEST_CASE("mean gradient is uniform") {
  Tensor w(Matrix(Matrix::Random(4, 1)), true);
  Tape tape;
  tape.backward(mean(tape.leaf(w)));
  CHECK(w.grad == Matrix(Matrix::Constant(4, 1, 0.25)));
}

TEST_CASE("gradient accumulation doubles exactly") {
  Rng rng(11);
  Tensor w(rng.normal_matrix(3, 2), true);
  auto run = [&] {
    Tape tape;
    Var vw = tape.leaf(w);
    tape.backward(sum(mul(tanh(vw), vw)));
  };
  run();
  Matrix once = w.grad;
  run();
  CHECK(w.grad == Matrix(2.0 * once));
  w.zero_grad();
  run();
  CHECK(w.grad == once);
}

TEST_CASE("scalar root required for backward") {
  Tensor w(Matrix(Matrix::Random(2, 2)), true);
  Tape tape;
  Var vw = tape.leaf(w);
  CHECK_THROWS_AS(tape.backward(mul(vw, vw)), std::runtime_error);
}

TEST_CASE("read-only leaves never receive gradient") {
  const Tensor frozen(Matrix(Matrix::Random(2, 2)), true);
  Tensor live(Matrix(Matrix::Random(2, 2)), true);
  Tape tape;
  tape.backward(sum(mul(tape.leaf(frozen), tape.leaf(live))));
  CHECK(!frozen.has_grad());
  CHECK(live.has_grad());
}

TEST_CASE("primitive gradients match finite differences") {
  auto away_from = [](double lo, double hi) {
    return [lo, hi](Matrix& x) {
      for (int r = 0; r < x.rows(); ++r)
        for (int c = 0; c < x.cols(); ++c) {
          if (std::abs(x(r, c) - lo) < 1e-3) x(r, c) = lo + 0.1;
          if (std::abs(x(r, c) - hi) < 1e-3) x(r, c) = hi - 0.1;
        }
    };
  };

  check_unary([](Tape&, Var x) { return neg(x); }, 3, 2, 101);
  check_unary([](Tape&, Var x) { return tanh(x); }, 3, 2, 102);
  check_unary([](Tape&, Var x) { return silu(x); }, 3, 2, 103);
  check_unary([](Tape&, Var x) { return square(x); }, 3, 2, 104);
  check_unary([](Tape&, Var x) { return exp(x); }, 3, 2, 105);
  check_unary([](Tape&, Var x) { return log(x); }, 3, 2, 106,
              [](Matrix& x) { x = x.cwiseAbs().array() + 0.5; });
  check_unary([](Tape&, Var x) { return scale(x, -1.7); }, 3, 2, 107);
  check_unary([](Tape&, Var x) { return add_scalar(x, 0.9); }, 3, 2, 108);
  check_unary([](Tape&, Var x) { return clip(x, -0.5, 0.5); }, 3, 2, 109, away_from(-0.5, 0.5));
  check_unary([](Tape&, Var x) { return sum(x); }, 3, 2, 110);
  check_unary([](Tape&, Var x) { return mean(x); }, 3, 2, 111);
  check_unary([](Tape&, Var x) { return gather_cols(x, {4, 0, 2, 2}); }, 3, 5, 112);

  check_binary([](Tape&, Var a, Var b) { return add(a, b); }, 3, 2, 3, 2, 201);
  check_binary([](Tape&, Var a, Var b) { return sub(a, b); }, 3, 2, 3, 2, 202);
  check_binary([](Tape&, Var a, Var b) { return mul(a, b); }, 3, 2, 3, 2, 203);
  check_binary([](Tape&, Var a, Var b) { return matmul(a, b); }, 3, 4, 4, 2, 204);
  check_binary([](Tape&, Var a, Var b) { return add_colwise(a, b); }, 3, 2, 3, 1, 205);
  check_binary([](Tape&, Var a, Var b) { return concat_rows(a, b); }, 2, 3, 4, 3, 206);
  check_binary([](Tape&, Var a, Var b) { return minimum(a, b); }, 3, 2, 3, 2, 207,
               [](Matrix& a, Matrix& b) {
                 for (int r = 0; r < a.rows(); ++r)
                   for (int c = 0; c < a.cols(); ++c)
                     if (std::abs(a(r, c) - b(r, c)) < 1e-3) b(r, c) += 0.2;
               });
}

TEST_CASE("clip passes gradient only inside the interval") {
  Matrix x(1, 4);
  x << -2.0, -0.2, 0.3, 1.5;
  Matrix w(1, 4);
  w << 3.0, 5.0, 7.0, 11.0;
  Tensor tx(x, true);
  Tape tape;
  tape.backward(sum(mul(clip(tape.leaf(tx), -0.5, 0.5), tape.constant(w))));
  Matrix expect(1, 4);
  expect << 0.0, 5.0, 7.0, 0.0;
  CHECK(tx.grad == expect);
}

TEST_CASE("minimum ties route gradient to the first operand") {
  Matrix same = Matrix::Constant(2, 2, 0.7);
  Tensor a(same, true), b(same, true);
  Tape tape;
  tape.backward(sum(minimum(tape.leaf(a), tape.leaf(b))));
  CHECK(a.grad == Matrix(Matrix::Ones(2, 2)));
  CHECK(b.grad == Matrix(Matrix::Zero(2, 2)));
}

TEST_CASE("shape mismatch names the op") {
  Tensor a(Matrix(Matrix::Random(2, 2)), true);
  Tensor b(Matrix(Matrix::Random(3, 1)), true);
  Tape tape;
  Var va = tape.leaf(a), vb = tape.leaf(b);
  CHECK_THROWS_WITH_AS(add(va, vb), doctest::Contains("add"), std::runtime_error);
  CHECK_THROWS_WITH_AS(matmul(va, vb), doctest::Contains("matmul"), std::runtime_error);
}

TEST_CASE("non-finite results name the op") {
  Tensor neg_in(Matrix(Matrix::Constant(1, 1, -1.0)), true);
  Tensor big(Matrix(Matrix::Constant(1, 1, 1e308)), true);
  Tape tape;
  CHECK_THROWS_WITH_AS(log(tape.leaf(neg_in)), doctest::Contains("log"), std::runtime_error);
  Var vb = tape.leaf(big);
  CHECK_THROWS_WITH_AS(mul(vb, vb), doctest::Contains("mul"), std::runtime_error);
}

TEST_CASE("tensor construction rejects non-finite values") {
  Matrix bad = Matrix::Zero(2, 2);
  bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(Tensor(bad, true), std::runtime_error);
}

TEST_CASE("two-layer tanh network matches finite differences") {
  Rng rng(31);
  ParamStore params;
  params.add("w1", rng.normal_matrix(8, 4));
  params.add("b1", rng.normal_matrix(8, 1));
  params.add("w2", rng.normal_matrix(2, 8));
  params.add("b2", rng.normal_matrix(2, 1));
  const Matrix input = rng.normal_matrix(4, 3);
  const Matrix target = rng.normal_matrix(2, 3);

  auto loss = [&](ParamStore& p) {
    Tape tape;
    Var h = tanh(add_colwise(matmul(tape.leaf(p.at("w1")), tape.constant_ref(input)),
                             tape.leaf(p.at("b1"))));
    Var out = add_colwise(matmul(tape.leaf(p.at("w2")), h), tape.leaf(p.at("b2")));
    return tape.backward(mean(square(sub(out, tape.constant_ref(target)))));
  };
  GradCheckResult res = gradient_check(params, loss);
  INFO("worst ", res.worst_param, "[", res.worst_index, "] analytic ", res.analytic, " numeric ",
       res.numeric);
  CHECK(res.ok(1e-4));
}

TEST_CASE("gradient check is exact for linear functions") {
  Rng rng(32);
  ParamStore params;
  params.add("w", rng.normal_matrix(3, 3));
  const Matrix coeff = rng.normal_matrix(3, 3);
  auto loss = [&](ParamStore& p) {
    Tape tape;
    return tape.backward(sum(mul(tape.leaf(p.at("w")), tape.constant_ref(coeff))));
  };
  CHECK(gradient_check(params, loss).max_rel_err < 1e-10);
}

TEST_CASE("gradient check flags a corrupted gradient") {
  Rng rng(33);
  ParamStore params;
  params.add("w", rng.normal_matrix(2, 2));
  auto value = [&](ParamStore& p) {
    Tape tape(false);
    return sum(square(tape.leaf(std::as_const(p).at("w")))).scalar();
  };
  auto corrupted = [&](ParamStore& p) {
    Tape tape;
    double v = tape.backward(sum(square(tape.leaf(p.at("w")))));
    p.at("w").grad *= 2.0;
    return v;
  };
  CHECK(!gradient_check(params, value, corrupted).ok(1e-4));
}

TEST_CASE("gradient check reports non-finite quotients as failures") {
  ParamStore params;
  params.add("w", Matrix(Matrix::Constant(1, 1, 0.5)));
  const double base = 0.5;
  auto poisoned = [&](ParamStore& p) {
    // Finite at the base point, NaN at every probe.
    if (p.at("w").value(0, 0) != base) return std::numeric_limits<double>::quiet_NaN();
    return 1.0;
  };
  auto with_grad = [&](ParamStore& p) {
    Tape tape;
    return tape.backward(sum(tape.leaf(p.at("w"))));
  };
  CHECK(!gradient_check(params, poisoned, with_grad).ok(1e-4));
}

TEST_CASE("no-grad tape evaluates without recording gradients") {
  Tensor w(row3(1, 2, 3), true);
  Tape tape(false);
  Var y = sum(mul(tape.leaf(w), tape.leaf(w)));
  CHECK(y.scalar() == 14.0);
  CHECK(!w.has_grad());
}
