#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mtgr/gradcheck.hpp"
#include "mtgr/gradcheck_suite.hpp"
#include "mtgr/ops.hpp"

using namespace mtgr;
using T = Tensor<double>;
using M = Matrix<double>;

namespace {

M random_matrix(std::mt19937_64& rng, Index r, Index c) {
  std::normal_distribution<double> n(0.0, 1.0);
  M m(r, c);
  for (Index i = 0; i < m.size(); ++i) m(i) = n(rng);
  return m;
}

}  // namespace

TEST(Ops, MatmulHandExample) {
  M a(2, 2);
  a << 1, 2, 3, 4;
  M b(2, 1);
  b << 0, 1;
  const auto c = matmul(T::constant(a), T::constant(b));
  ASSERT_EQ(c.rows(), 2);
  ASSERT_EQ(c.cols(), 1);
  EXPECT_EQ(c.value()(0, 0), 2.0);
  EXPECT_EQ(c.value()(1, 0), 4.0);
}

TEST(Ops, MatmulShapeMismatchThrows) {
  EXPECT_THROW(matmul(T::constant(M::Ones(2, 3)), T::constant(M::Ones(2, 3))), DimensionError);
  EXPECT_THROW(add(T::constant(M::Ones(2, 3)), T::constant(M::Ones(3, 2))), DimensionError);
}

TEST(Ops, SiluAtOne) {
  M x(1, 1);
  x << 1.0;
  const double expected = 1.0 / (1.0 + std::exp(-1.0));
  EXPECT_NEAR(silu(T::constant(x)).item(), expected, 1e-15);
}

TEST(Ops, SiluLargeMagnitudesStayFinite) {
  M x(1, 3);
  x << -800.0, 0.0, 800.0;
  const auto y = silu(T::constant(x)).value();
  EXPECT_EQ(y(0, 1), 0.0);
  EXPECT_NEAR(y(0, 2), 800.0, 1e-12);
  EXPECT_TRUE(y.allFinite());
}

TEST(Ops, LayerNormMatchesScalarMeanVariance) {
  std::mt19937_64 rng(5);
  const M x = random_matrix(rng, 3, 7);
  const M gamma = random_matrix(rng, 1, 7);
  const M beta = random_matrix(rng, 1, 7);
  const double eps = 1e-6;
  const auto y = layer_norm(T::constant(x), T::constant(gamma), T::constant(beta), eps).value();
  for (Index r = 0; r < 3; ++r) {
    double mu = 0;
    for (Index c = 0; c < 7; ++c) mu += x(r, c);
    mu /= 7;
    double var = 0;
    for (Index c = 0; c < 7; ++c) var += (x(r, c) - mu) * (x(r, c) - mu);
    var /= 7;
    for (Index c = 0; c < 7; ++c) {
      EXPECT_NEAR(y(r, c), (x(r, c) - mu) / std::sqrt(var + eps) * gamma(0, c) + beta(0, c), 1e-12);
    }
  }
}

TEST(Ops, BceWithLogitsMatchesFormula) {
  std::mt19937_64 rng(11);
  const M z = random_matrix(rng, 9, 1) * 4.0;
  M y(9, 1);
  for (Index i = 0; i < 9; ++i) y(i) = i % 3 == 0 ? 1.0 : 0.0;
  double expected = 0;
  for (Index i = 0; i < 9; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-z(i)));
    expected -= y(i) * std::log(p) + (1 - y(i)) * std::log(1 - p);
  }
  EXPECT_NEAR(bce_with_logits(T::constant(z), y).item(), expected / 9, 1e-12);
}

TEST(Ops, NonFiniteOutputThrows) {
  M x(1, 2);
  x << 1.0, std::numeric_limits<double>::infinity();
  EXPECT_THROW(scale(T::constant(x), 2.0), NumericError);
}

TEST(Autograd, QuadraticFormExactGradient) {
  // f(x) = x^T A x has gradient (A + A^T) x.
  std::mt19937_64 rng(2);
  const M a = random_matrix(rng, 4, 4);
  const M x0 = random_matrix(rng, 4, 1);
  auto x = T::parameter(x0);
  const auto f = sum(mul(x, matmul(T::constant(a), x)));
  const auto g = grad(f, std::vector<T>{x});
  const M expected = (a + a.transpose()) * x0;
  EXPECT_LT((g[0] - expected).cwiseAbs().maxCoeff(), 1e-8);

  const auto report = finite_diff_check<double>(
      [&](const std::vector<T>& p) { return sum(mul(p[0], matmul(T::constant(a), p[0]))); }, {x0}, 1e-5);
  EXPECT_LT(report.max_relative_error, 1e-8);
}

TEST(Autograd, SharedSubgraphAccumulates) {
  M v(1, 1);
  v << 3.0;
  auto x = T::parameter(v);
  const auto y = add(mul(x, x), x);  // x^2 + x
  EXPECT_DOUBLE_EQ(grad(y, std::vector<T>{x})[0](0, 0), 7.0);
}

TEST(Autograd, ConstantsGetZeroGradient) {
  auto x = T::parameter(M::Ones(2, 2));
  auto c = T::constant(M::Ones(2, 2));
  const auto g = grad(sum(mul(x, c)), std::vector<T>{x, c});
  EXPECT_EQ(g[1].cwiseAbs().sum(), 0.0);
  EXPECT_EQ(g[0].sum(), 4.0);
}

TEST(Autograd, GradOfNonScalarThrows) {
  auto x = T::parameter(M::Ones(2, 2));
  EXPECT_THROW(grad(x, std::vector<T>{x}), ContractError);
}

TEST(Autograd, RandomCompositesMatchFiniteDifferences) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    const M a = random_matrix(rng, 3, 4);
    const M b = random_matrix(rng, 4, 5);
    const M g = random_matrix(rng, 1, 5);
    M targets(3, 5);
    for (Index i = 0; i < targets.size(); ++i) targets(i) = (rng() & 1) ? 1.0 : 0.0;
    auto f = [&](const std::vector<T>& p) {
      const auto h = silu(matmul(p[0], p[1]));
      const auto n = layer_norm(h, p[2], T::constant(M::Zero(1, 5)), 1e-6);
      return bce_with_logits(n, targets);
    };
    const auto report = finite_diff_check<double>(f, {a, b, g}, 1e-5);
    EXPECT_LT(report.max_relative_error, 1e-4) << "trial " << trial;
  }
}

TEST(Autograd, ModuleSuiteBelowTolerance) {
  const auto checks = run_gradient_checks(7);
  ASSERT_FALSE(checks.empty());
  for (const auto& c : checks) {
    EXPECT_LT(c.max_relative_error, 1e-4) << c.module;
    EXPECT_GT(c.coordinates, 0u) << c.module;
  }
}

TEST(Autograd, FloatPrecisionRuns) {
  Matrix<float> a(2, 2);
  a << 1, 2, 3, 4;
  auto x = Tensor<float>::parameter(a);
  const auto g = grad(sum(mul(x, x)), std::vector<Tensor<float>>{x});
  EXPECT_FLOAT_EQ(g[0](1, 1), 8.0f);
}
