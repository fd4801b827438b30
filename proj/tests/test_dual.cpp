#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "aot/dual.hpp"

using namespace aot;

TEST(Dual, SquareAtThree) {
  const auto f = [](auto x) { return x[0] * x[0]; };
  const auto [v, g] = value_and_gradient<1>(f, {3.0});
  EXPECT_EQ(v, 9.0);
  EXPECT_EQ(g[0], 6.0);
  EXPECT_LT(grad_check<1>(f, {3.0}, 1e-5), 1e-6);
}

TEST(Dual, ProductWithSineAgainstCentralDifferences) {
  using std::sin;
  const auto f = [](auto x) {
    using std::sin;
    return x[0] * sin(x[1]);
  };
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 100; ++i) {
    const std::array<double, 2> x{u(rng), u(rng)};
    EXPECT_LT(grad_check<2>(f, x, 1e-5), 1e-5) << x[0] << " " << x[1];
  }
}

TEST(Dual, ConstantHasZeroPartials) {
  const auto f = [](auto x) {
    using T = std::decay_t<decltype(x[0])>;
    return T(4.25);
  };
  const auto [v, g] = value_and_gradient<3>(f, {1.0, 2.0, 3.0});
  EXPECT_EQ(v, 4.25);
  for (double d : g) EXPECT_EQ(d, 0.0);
}

TEST(Dual, NonFiniteValueIsAnError) {
  const auto f = [](auto x) {
    using std::log;
    return log(x[0]);
  };
  EXPECT_THROW(grad_check<1>(f, {-1.0}, 1e-5), EvaluationError);
  EXPECT_THROW(grad_check<1>(f, {1.0}, 0.0), DomainError);
}

// Chain rule for every supported unary op: partials(g(x)) = g'(x) partials(x).
TEST(Dual, ChainRuleOfEveryUnaryOp) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.2, 2.0);
  for (int i = 0; i < 200; ++i) {
    const double xv = u(rng);
    Dual<3> x(xv, {0.5, -1.5, 2.0});
    const auto check = [&](const Dual<3>& y, double dg) {
      for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(y.partial(k), dg * x.partial(k), 1e-12 * (1 + std::abs(dg)));
    };
    check(sqrt(x), 0.5 / std::sqrt(xv));
    check(sin(x), std::cos(xv));
    check(cos(x), -std::sin(xv));
    check(exp(x), std::exp(xv));
    check(log(x), 1.0 / xv);
    check(abs(-x), 1.0);
    check(x * x, 2 * xv);
    check(1.0 / x, -1.0 / (xv * xv));
    check(atan2(x, Dual<3>(1.0)), 1.0 / (1 + xv * xv));
  }
}

TEST(Dual, PartialsLengthIsFixedPerContext) {
  static_assert(Dual<7>::size() == 7);
  const Dual<7> a = Dual<7>::variable(1.0, 3);
  const Dual<7> b = a * a + 2.0;
  EXPECT_EQ(b.partials().size(), 7u);
  EXPECT_EQ(b.partial(3), 2.0);
}

TEST(Dual, MaxSelectsActiveBranch) {
  const Dual<2> a = Dual<2>::variable(1.0, 0);
  const Dual<2> b = Dual<2>::variable(2.0, 1);
  const Dual<2> m = max(a, b);
  EXPECT_EQ(m.value(), 2.0);
  EXPECT_EQ(m.partial(0), 0.0);
  EXPECT_EQ(m.partial(1), 1.0);
}
