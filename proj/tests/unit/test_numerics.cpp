#include <doctest.h>

#include <cmath>

#include "cold/error.hpp"
#include "cold/numerics.hpp"
#include "support/oracles.hpp"

using namespace cold;

namespace {

double max_abs_diff(const Array& a, const Array& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i] - b[i])));
  return m;
}

}  // namespace

TEST_CASE("softmax of a constant row is uniform") {
  Tape tape;
  Var s = softmax_rows(tape.constant(Array::from_rows({{0, 0, 0}})));
  for (std::size_t i = 0; i < 3; ++i) CHECK(s.value()[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("softmax at small temperature approaches one-hot") {
  Tape tape;
  Var s = softmax_rows(tape.constant(Array::from_rows({{1, 0}})), 0.01);
  CHECK(std::abs(s.value()[0] - 1) < 1e-8);
  CHECK(s.value()[1] < 1e-8);
}

TEST_CASE("softmax rows sum to one and stay positive") {
  Rng rng(3);
  Tape tape;
  Var s = softmax_rows(tape.constant(testing::random_array(rng, 6, 50, 20.0)), 0.7);
  for (std::size_t r = 0; r < 6; ++r) {
    double z = 0;
    for (real v : s.value().row(r)) {
      CHECK(v > 0);
      z += v;
    }
    CHECK(std::abs(z - 1) < 1e-12);
  }
}

TEST_CASE("identity matmul returns its operand") {
  Rng rng(4);
  const Array a = testing::random_array(rng, 3, 5);
  Tape tape;
  Var p = matmul(tape.constant(Array::identity(3)), tape.constant(a));
  CHECK(p.value() == a);
}

TEST_CASE("shape errors name both shapes") {
  Tape tape;
  Var a = tape.constant(Array(2, 3));
  Var b = tape.constant(Array(4, 5));
  try {
    add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x5]") != std::string::npos);
  }
  CHECK_THROWS_AS(matmul(a, tape.constant(Array(2, 2))), ShapeError);
}

TEST_CASE("log of a non-positive value is rejected") {
  Tape tape;
  CHECK_THROWS_AS(log(tape.constant(Array::from_rows({{1, 0}}))), DomainError);
  CHECK_THROWS_AS(log(tape.constant(Array::from_rows({{-2}}))), DomainError);
}

TEST_CASE("derivative of x*x at 3 is 6") {
  Tape tape;
  Var x = tape.leaf(Array::scalar(3));
  Var y = mul(x, x);
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(6));
}

TEST_CASE("sum of softmax has zero gradient") {
  Rng rng(5);
  Tape tape;
  Var x = tape.leaf(testing::random_array(rng, 2, 7, 3.0));
  tape.backward(sum(softmax_rows(x, 0.5)));
  for (std::size_t i = 0; i < x.grad().size(); ++i) CHECK(std::abs(x.grad()[i]) < 1e-14);
}

TEST_CASE("backward needs a scalar output") {
  Tape tape;
  Var x = tape.leaf(Array(2, 2, 1));
  CHECK_THROWS_AS(tape.backward(exp(x)), ShapeError);
}

TEST_CASE("gradient accumulators start at zero and unreached leaves keep them") {
  Tape tape;
  Var x = tape.leaf(Array(1, 3, 2));
  Var unused = tape.leaf(Array(2, 2, 5));
  tape.backward(sum(x));
  for (std::size_t i = 0; i < unused.grad().size(); ++i) CHECK(unused.grad()[i] == 0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == 1);
}

TEST_CASE("backward is linear in the output") {
  Rng rng(6);
  const Array x0 = testing::random_array(rng, 3, 4);
  auto f = [](Tape&, Var x) { return sum(mul(tanh(x), x)); };
  auto g = [](Tape& t, Var x) { return mean(log_softmax_rows(x, 0.8)); };
  const auto [fv, fg] = value_and_grad(f, x0);
  const auto [gv, gg] = value_and_grad(g, x0);
  const auto [hv, hg] = value_and_grad([&](Tape& t, Var x) { return add(f(t, x), g(t, x)); }, x0);
  CHECK(hv == doctest::Approx(fv + gv).epsilon(1e-14));
  for (std::size_t i = 0; i < x0.size(); ++i) CHECK(std::abs(hg[i] - fg[i] - gg[i]) < 1e-14);
}

TEST_CASE("minimum routes gradient to the smaller operand, ties to the first") {
  Tape tape;
  Var a = tape.leaf(Array::from_rows({{1, 5, 2}}));
  Var b = tape.leaf(Array::from_rows({{3, 4, 2}}));
  Var m = minimum(a, b);
  CHECK(m.value() == Array::from_rows({{1, 4, 2}}));
  tape.backward(sum(m));
  CHECK(a.grad() == Array::from_rows({{1, 0, 1}}));
  CHECK(b.grad() == Array::from_rows({{0, 1, 0}}));
}

TEST_CASE("check_gradient on a sum of squares") {
  const auto r = check_gradient([](Tape&, Var x) { return sum(mul(x, x)); }, Array::from_rows({{1, 2}}), 1e-5);
  CHECK(r.max_relative_error <= 1e-8);
}

TEST_CASE("check_gradient reports the failing coordinate") {
  // log(x) probed below zero at the second coordinate.
  auto f = [](Tape&, Var x) { return sum(log(x)); };
  try {
    check_gradient(f, Array::from_rows({{1.0, 1e-6}}), 1e-5);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("coordinate 1") != std::string::npos);
  }
  CHECK_THROWS_AS(check_gradient(f, Array::from_rows({{1.0}}), 0.0), DomainError);
}

TEST_CASE("every differentiable op passes the finite-difference check") {
  Rng rng(7);
  const Array w = testing::random_array(rng, 2, 5);
  const Array row = testing::random_array(rng, 1, 3);
  const Array other = testing::random_array(rng, 5, 3);
  const std::vector<std::size_t> rows = {4, 0, 0, 2};
  const std::vector<std::size_t> cols = {2, 0, 1, 1, 0};

  std::vector<std::pair<const char*, ScalarGraphFn>> cases = {
      {"add/sub/mul", [&](Tape& t, Var x) { return sum(mul(add(x, t.constant(other)), sub(x, t.constant(other)))); }},
      {"affine", [&](Tape&, Var x) { return sum(mul(affine(x, 1.5, -0.2), x)); }},
      {"matmul", [&](Tape& t, Var x) { return sum(tanh(matmul(x, t.constant(Array(3, 4, 0.3))))); }},
      {"matmul rhs", [&](Tape& t, Var x) { return sum(sigmoid(matmul(t.constant(w), scale(x, 0.5)))); }},
      {"add_row", [&](Tape& t, Var x) { return sum(exp(add_row(scale(x, 0.3), t.constant(row)))); }},
      {"softmax", [&](Tape& t, Var x) { return sum(mul(softmax_rows(x, 0.7), t.constant(other))); }},
      {"log_softmax", [&](Tape& t, Var x) { return sum(mul(log_softmax_rows(x, 1.3), t.constant(other))); }},
      {"log/exp", [&](Tape&, Var x) { return mean(log(exp(x))); }},
      {"sum_cols", [&](Tape&, Var x) { return sum(mul(sum_cols(x), sum_cols(x))); }},
      {"gather", [&](Tape&, Var x) { return sum(tanh(gather_rows(x, rows))); }},
      {"pick", [&](Tape&, Var x) { return sum(exp(pick(x, cols))); }},
      {"minimum", [&](Tape& t, Var x) { return sum(minimum(x, t.constant(other))); }},
      {"concat", [&](Tape&, Var x) {
         std::vector<Var> parts = {x, scale(x, 2.0)};
         return sum(tanh(concat_rows(parts)));
       }},
  };
  const Array x0 = testing::random_array(rng, 5, 3);
  for (const auto& [name, f] : cases) {
    const std::string label = name;
    CAPTURE(label);
    CHECK(check_gradient(f, x0).max_relative_error <= 1e-6);
  }
}

TEST_CASE("uninitialized outputs are fully written") {
  Tape tape;
  Array a(3, 4, 2.0);
  Var s = softmax_rows(tape.constant(a));
  CHECK(max_abs_diff(s.value(), Array(3, 4, 0.25)) < 1e-15);
}
