#include <doctest.h>

#include "gatenet/errors.hpp"
#include "gatenet/ops.hpp"
#include "gatenet/tape.hpp"
#include "oracles.hpp"

using namespace gatenet;

TEST_SUITE("tape") {
  TEST_CASE("backward rejects an empty tape, a foreign variable and a non-scalar target") {
    Tape<double> empty;
    Tape<double> other;
    auto foreign = other.variable(Tensor64({1}, 2.0));
    CHECK_THROWS_AS(empty.backward(foreign), std::logic_error);

    Tape<double> tape;
    auto x = tape.variable(Tensor64({2, 2}, 1.0));
    CHECK_THROWS_AS(tape.backward(foreign), std::logic_error);
    CHECK_THROWS_AS(tape.backward(x), ShapeError);
  }

  TEST_CASE("fan-out accumulates gradients") {
    Tape<double> tape;
    const auto xv = oracle::random_tensor({3, 4}, 5);
    auto x = tape.variable(xv);
    auto loss = sum(mul(x, x));
    tape.backward(loss);
    const auto& g = tape.grad(x);
    for (std::size_t i = 0; i < xv.size(); ++i) CHECK(g[i] == doctest::Approx(2.0 * xv[i]));
  }

  TEST_CASE("constants receive no gradient") {
    Tape<double> tape;
    auto c = tape.constant(Tensor64({2}, 3.0));
    auto x = tape.variable(Tensor64({2}, 1.0));
    tape.backward(sum(mul(c, x)));
    CHECK_FALSE(tape.requires_grad(c));
    CHECK_THROWS_AS(tape.grad(c), std::logic_error);
    CHECK(tape.grad(x)[0] == 3.0);
  }

  TEST_CASE("frozen parameters pass gradients upstream without one of their own") {
    Parameter w("w", Tensor({2, 3}, 0.5f), false);
    Parameter b("b", Tensor({3}, 0.0f), false);
    Tape<float> tape;
    auto x = tape.variable(Tensor({1, 2}, 1.0f));
    auto loss = sum(linear(x, tape.parameter(w), tape.parameter(b)));
    tape.backward(loss);
    CHECK(tape.grad(x)[0] == doctest::Approx(1.5f));
    CHECK_FALSE(w.has_grad);
    CHECK(w.grad == Tensor({2, 3}));

    Tape<float> tracked;
    tracked.set_track_frozen(true);
    auto x2 = tracked.variable(Tensor({1, 2}, 1.0f));
    tracked.backward(sum(linear(x2, tracked.parameter(w), tracked.parameter(b))));
    CHECK(w.has_grad);
    CHECK(w.grad[0] == doctest::Approx(1.0f));
  }

  TEST_CASE("float tapes accumulate into Parameter::grad across backward calls") {
    Parameter p("p", Tensor({2}, 1.0f));
    for (int i = 0; i < 2; ++i) {
      Tape<float> tape;
      tape.backward(sum(mul(tape.parameter(p), tape.constant(Tensor({2}, 3.0f)))));
    }
    CHECK(p.grad[0] == 6.0f);
    p.zero_grad();
    CHECK(p.grad[0] == 0.0f);
    CHECK_FALSE(p.has_grad);
  }

  TEST_CASE("double tapes leave Parameter::grad untouched but expose the bound gradient") {
    Parameter p("p", Tensor({2}, 1.0f));
    Tape<double> tape;
    auto v = tape.parameter(p);
    tape.backward(sum(mul(v, tape.constant(Tensor64({2}, 3.0)))));
    CHECK_FALSE(p.has_grad);
    CHECK(tape.grad(tape.bound(p))[1] == 3.0);
    Parameter q("q", Tensor({1}));
    CHECK_THROWS_AS(tape.bound(q), std::logic_error);
  }

  TEST_CASE("replay reproduces every recorded value bitwise") {
    Tape<float> tape;
    auto x = tape.constant(oracle::random_tensor({2, 1, 8, 8}, 3).cast<float>());
    auto k = tape.variable(oracle::random_tensor({4, 1, 3, 3}, 4).cast<float>());
    auto b = tape.variable(Tensor({4}, 0.1f));
    auto y = sigmoid(maxpool2d(relu(conv2d(x, k, b, {1, 1}, {1, 1})), {2, 2}, {2, 2}));
    sum(y);
    CHECK(tape.replay_matches());
  }
}
