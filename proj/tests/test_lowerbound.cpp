#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "margin_auditor/complexity.hpp"
#include "margin_auditor/lowerbound.hpp"
#include "oracles/oracles.hpp"

using namespace margin_auditor;

TEST(LinearNetwork, ComputesInnerProduct) {
  const std::vector<double> a{1.0, 0.0};
  const Network net = build_linear_network(a, 3);
  EXPECT_EQ(forward(net, Matrix{{0.5, -2.0}})(0, 0), 0.5);
  EXPECT_EQ(forward(net, Matrix{{-0.5, 7.0}})(0, 0), -0.5);
}

TEST(LinearNetwork, ProductOfSpectralNorms) {
  const std::vector<double> a{3.0, 4.0};
  for (std::size_t L : {2u, 3u, 6u}) {
    const auto norms = layer_norms(build_linear_network(a, L));
    EXPECT_NEAR(product_spectral_norms(norms), 10.0, 1e-10);
    EXPECT_NEAR(norms.front().s, 5.0 * std::sqrt(2.0), 1e-10);
    EXPECT_NEAR(norms.back().s, std::sqrt(2.0), 1e-12);
  }
}

TEST(LinearNetwork, RandomInputsAndWidePadding) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  for (int t = 0; t < 200; ++t) {
    const std::size_t d = 2 + t % 5;
    const std::size_t L = 2 + t % 5;
    std::vector<double> a(d);
    for (double& v : a) v = normal(rng);
    std::vector<std::size_t> widths(L - 1);
    for (auto& w : widths) w = 2 + static_cast<std::size_t>(t % 3);
    const Network net = build_linear_network(a, L, widths);
    const Matrix x = oracle::random_matrix(3, d, rng);
    const Matrix out = forward(net, x);
    for (std::size_t i = 0; i < 3; ++i) {
      double exact = 0.0;
      for (std::size_t j = 0; j < d; ++j) exact += a[j] * x(i, j);
      EXPECT_NEAR(out(i, 0), exact, 1e-12);
    }
  }
}

TEST(LinearNetwork, RejectsBadShapes) {
  const std::vector<double> a{1.0, 2.0};
  EXPECT_THROW(build_linear_network(a, 1), ParameterError);
  EXPECT_THROW(build_linear_network(a, 3, {2, 1}), ParameterError);
  EXPECT_THROW(build_linear_network(a, 3, {2}), ParameterError);
  EXPECT_THROW(build_linear_network(std::vector<double>{0.0, 0.0}, 2), ParameterError);
  EXPECT_THROW(build_linear_network(std::vector<double>{1.0}, 2), ParameterError);
}

TEST(Rademacher, SingleExampleIsExact) {
  const Matrix x{{3.0, 4.0}};
  const auto est = rademacher_linear_estimate(x, 2.0, 50, 7);
  EXPECT_DOUBLE_EQ(est.mean, 10.0);
  EXPECT_EQ(est.standard_error, 0.0);
}

TEST(Rademacher, HomogeneousInRadius) {
  std::mt19937_64 rng(2);
  const Matrix x = oracle::random_matrix(10, 3, rng);
  const auto one = rademacher_linear_estimate(x, 1.0, 500, 3);
  const auto two = rademacher_linear_estimate(x, 2.0, 500, 3);
  EXPECT_DOUBLE_EQ(two.mean, 2.0 * one.mean);
}

TEST(Rademacher, KhintchineFloorForOrthogonalRows) {
  const std::size_t n = 20;
  Matrix x(n, n);
  for (std::size_t i = 0; i < n; ++i) x(i, i) = 1.5;
  const auto est = rademacher_linear_estimate(x, 1.0, 10000, 11);
  // Orthogonal equal-norm rows: ||sum eps_t x_t|| = ||X||_2 for every sign vector.
  const double norm = data_norm(x);
  EXPECT_NEAR(est.mean, norm / n, 1e-12);
  EXPECT_GE(est.mean, norm / (std::sqrt(2.0) * n) - 3.0 * est.standard_error);
}

TEST(Rademacher, RejectsBadInput) {
  EXPECT_THROW(rademacher_linear_estimate(Matrix{}, 1.0, 10, 0), ParameterError);
  EXPECT_THROW(rademacher_linear_estimate(Matrix{{1.0}}, 1.0, 0, 0), ParameterError);
  EXPECT_THROW(rademacher_linear_estimate(Matrix{{1.0}}, 0.0, 10, 0), ParameterError);
}
