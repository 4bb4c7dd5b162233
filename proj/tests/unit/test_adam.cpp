#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "gatenet/adam.hpp"

using namespace gatenet;

TEST_SUITE("adam") {
  TEST_CASE("first step moves each weight by lr against the gradient sign") {
    Parameter p("w", Tensor({3}, std::vector<float>{1.0f, -2.0f, 0.5f}));
    p.grad = Tensor({3}, std::vector<float>{0.3f, -4.0f, 0.0f});
    p.has_grad = true;
    Adam adam({.lr = 0.01});
    Parameter* params[] = {&p};
    adam.step(params);
    // m1 = 0.1 g, v1 = 0.001 g^2; bias-corrected update = g / (|g| + eps).
    CHECK(p.value[0] == doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + 1e-8)).epsilon(1e-6));
    CHECK(p.value[1] == doctest::Approx(-2.0 + 0.01 * 4.0 / (4.0 + 1e-8)).epsilon(1e-6));
    CHECK(p.value[2] == 0.5f);
    CHECK(adam.steps() == 1);
  }

  TEST_CASE("first step on w^2 from 1 with lr 0.1 lands at 0.9") {
    Parameter p("w", Tensor({1}, 1.0f));
    p.grad[0] = 2.0f;
    p.has_grad = true;
    Adam adam({.lr = 0.1});
    Parameter* params[] = {&p};
    adam.step(params);
    CHECK(p.value[0] == doctest::Approx(0.9).epsilon(1e-6));
  }

  TEST_CASE("converges on a convex quadratic") {
    // f(w) = sum a_i (w_i - c_i)^2
    const std::vector<double> a{1.0, 3.0, 0.5}, c{0.4, -0.7, 0.2};
    Parameter p("w", Tensor({3}, 0.0f));
    Adam adam({.lr = 0.05});
    Parameter* params[] = {&p};
    auto loss = [&] {
      double f = 0.0;
      for (std::size_t i = 0; i < 3; ++i) f += a[i] * (p.value[i] - c[i]) * (p.value[i] - c[i]);
      return f;
    };
    std::vector<double> curve{loss()};
    for (int step = 0; step < 200; ++step) {
      for (std::size_t i = 0; i < 3; ++i) p.grad[i] = static_cast<float>(2.0 * a[i] * (p.value[i] - c[i]));
      p.has_grad = true;
      adam.step(params);
      curve.push_back(loss());
    }
    CHECK(curve.back() < 1e-4);
    // Monotone over the warm-up phase, before the iterate reaches the optimum's neighborhood.
    for (std::size_t t = 1; t <= 10; ++t) CHECK(curve[t] < curve[t - 1]);
    CHECK(*std::max_element(curve.begin() + 100, curve.end()) < curve[10]);
  }

  TEST_CASE("second step matches a hand recursion") {
    Parameter p("w", Tensor({1}, std::vector<float>{0.0f}));
    Adam adam({.lr = 0.1, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8});
    Parameter* params[] = {&p};
    const double grads[] = {1.0, -0.5};
    double m = 0.0, v = 0.0, w = 0.0;
    for (int t = 1; t <= 2; ++t) {
      const double g = grads[t - 1];
      p.grad[0] = static_cast<float>(g);
      p.has_grad = true;
      adam.step(params);
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      const double mh = m / (1.0 - std::pow(0.9, t));
      const double vh = v / (1.0 - std::pow(0.999, t));
      w -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(p.value[0] == doctest::Approx(w).epsilon(1e-6));
    }
  }

  TEST_CASE("frozen parameters are skipped") {
    Parameter live("a", Tensor({2}, 1.0f));
    Parameter frozen("b", Tensor({2}, 1.0f), false);
    for (Parameter* p : {&live, &frozen}) {
      p->grad.fill(1.0f);
      p->has_grad = true;
    }
    Adam adam;
    Parameter* params[] = {&live, &frozen};
    adam.step(params);
    CHECK(live.value[0] < 1.0f);
    CHECK(frozen.value == Tensor({2}, 1.0f));
  }

  TEST_CASE("a step without any gradient throws") {
    Parameter p("w", Tensor({2}, 1.0f));
    Adam adam;
    Parameter* params[] = {&p};
    CHECK_THROWS_AS(adam.step(params), std::logic_error);
    CHECK(adam.steps() == 0);
  }

  TEST_CASE("zero_grads clears values and flags") {
    Parameter p("w", Tensor({2}, 1.0f));
    p.grad.fill(3.0f);
    p.has_grad = true;
    Parameter* params[] = {&p};
    zero_grads(params);
    CHECK(p.grad == Tensor({2}, 0.0f));
    CHECK_FALSE(p.has_grad);
  }
}
