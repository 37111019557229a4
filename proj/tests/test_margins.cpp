#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "margin_auditor/complexity.hpp"
#include "margin_auditor/margins.hpp"
#include "oracles/oracles.hpp"

using namespace margin_auditor;

namespace {

Dataset random_dataset(std::mt19937_64& rng, std::size_t n, std::size_t d, int k) {
  std::uniform_int_distribution<int> label(1, k);
  std::vector<int> y(n);
  for (int& v : y) v = label(rng);
  return Dataset(oracle::random_matrix(n, d, rng), std::move(y), k);
}

Network random_net(std::mt19937_64& rng, std::size_t d, std::size_t h, std::size_t k) {
  return Network({Layer(oracle::random_matrix(h, d, rng), Nonlinearity::relu()),
                  Layer(oracle::random_matrix(k, h, rng), Nonlinearity::relu())});
}

double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return s;
}

}  // namespace

TEST(MarginOperator, Examples) {
  EXPECT_EQ(margin_operator(std::vector<double>{3, 1, 0}, 1), 2.0);
  EXPECT_EQ(margin_operator(std::vector<double>{0, 0}, 1), 0.0);
  EXPECT_EQ(margin_operator(std::vector<double>{3, 1, 0}, 3), -3.0);
  EXPECT_THROW(margin_operator(std::vector<double>{1}, 1), ParameterError);
  EXPECT_THROW(margin_operator(std::vector<double>{1, 2}, 3), ParameterError);
  EXPECT_THROW(margin_operator(std::vector<double>{1, 2}, 0), ParameterError);
}

TEST(MarginOperator, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(6);
    for (double& x : v) x = normal(rng);
    for (int y = 1; y <= 6; ++y) {
      double best = -1e300;
      for (int i = 1; i <= 6; ++i)
        if (i != y && v[i - 1] > best) best = v[i - 1];
      EXPECT_EQ(margin_operator(v, y), v[y - 1] - best);
    }
  }
}

TEST(MarginOperator, IsTwoLipschitz) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  for (int t = 0; t < 300; ++t) {
    std::vector<double> v(5), w(5), d(5);
    for (std::size_t i = 0; i < 5; ++i) {
      v[i] = normal(rng);
      w[i] = normal(rng);
      d[i] = v[i] - w[i];
    }
    for (const NormExponent& p : {NormExponent{1.0}, NormExponent{2.0}, NormExponent{infinity}})
      for (int y = 1; y <= 5; ++y)
        EXPECT_LE(std::abs(margin_operator(v, y) - margin_operator(w, y)), 2.0 * vector_norm(d, p) + 1e-12);
  }
}

TEST(RampLoss, Branches) {
  const double g = 0.4;
  EXPECT_EQ(ramp_loss(-2 * g, g), 0.0);
  EXPECT_DOUBLE_EQ(ramp_loss(-g / 2, g), 0.5);
  EXPECT_EQ(ramp_loss(1.0, 0.3), 1.0);
  EXPECT_EQ(ramp_loss(0.0, g), 1.0);
  EXPECT_EQ(ramp_loss(-g, g), 0.0);
  EXPECT_THROW(ramp_loss(0.0, 0.0), ParameterError);
}

TEST(RampLoss, MonotoneAndLipschitz) {
  const double g = 0.7;
  double prev = ramp_loss(-3.0, g);
  for (int i = 1; i <= 600; ++i) {
    const double r = -3.0 + 0.01 * i;
    const double cur = ramp_loss(r, g);
    EXPECT_GE(cur, prev);
    EXPECT_LE(cur - prev, (2.0 / g) * 0.01 + 1e-12);
    prev = cur;
  }
}

TEST(PredictLabel, TiesGoToLowestIndex) {
  EXPECT_EQ(predict_label(std::vector<double>{0, 0, 0}), 1);
  EXPECT_EQ(predict_label(std::vector<double>{1, 5, 5}), 2);
}

TEST(RiskAndError, SimpleNetworks) {
  const Dataset ds(Matrix{{1, 0}, {0, 1}}, {1, 1}, 2);
  const Network zero({Layer(Matrix(2, 2), Nonlinearity::identity())});
  EXPECT_EQ(ramp_risk_empirical(zero, ds, 0.5), 1.0);
  EXPECT_EQ(error_rate(zero, ds), 0.0);
  // Output (10, 0) for every input: margin 10 > gamma on every point.
  const Network wide({Layer(Matrix{{10, 10}, {0, 0}}, Nonlinearity::identity())});
  EXPECT_EQ(ramp_risk_empirical(wide, ds, 1.0), 0.0);
  EXPECT_EQ(error_rate(wide, ds), 0.0);
  EXPECT_THROW(ramp_risk_empirical(zero, ds, 0.0), ParameterError);
}

TEST(RiskAndError, MatchLoopOraclesAndOrdering) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const Dataset ds = random_dataset(rng, 20, 4, 3);
    const Network net = random_net(rng, 4, 6, 3);
    const double gamma = std::uniform_real_distribution<double>(0.01, 3.0)(rng);
    const Matrix out = forward(net, ds.x);
    double ramp = 0.0;
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto row = out.row(i);
      std::size_t arg = 0;
      for (std::size_t j = 1; j < row.size(); ++j)
        if (row[j] > row[arg]) arg = j;
      if (static_cast<int>(arg) + 1 != ds.y[i]) ++wrong;
      ramp += ramp_loss(-margin_operator(row, ds.y[i]), gamma);
    }
    EXPECT_NEAR(ramp_risk_empirical(net, ds, gamma), ramp / 20.0, 1e-12);
    EXPECT_EQ(error_rate(net, ds), static_cast<double>(wrong) / 20.0);
    EXPECT_LE(error_rate(net, ds), ramp_risk_empirical(net, ds, gamma));
  }
}

TEST(DefaultGamma, MedianOfPositiveMargins) {
  EXPECT_EQ(default_gamma(std::vector<double>{-1, 3, 1, 2}), 2.0);
  EXPECT_EQ(default_gamma(std::vector<double>{-1, 4, 1}), 2.5);
  EXPECT_EQ(default_gamma(std::vector<double>{-1, 0}), 1.0);
}

TEST(MarginDistribution, SinglePointNormalization) {
  const auto md = margin_distribution_from_outputs(Matrix{{1, 0}}, std::vector<int>{1}, 0.5, 1.0);
  EXPECT_EQ(md.normalizer, 0.5);
  EXPECT_EQ(md.normalized[0], 2.0);
  EXPECT_THROW(margin_distribution_from_outputs(Matrix{{1, 0}}, std::vector<int>{1}, 1.0, 0.0), DegeneracyError);
  EXPECT_THROW(margin_distribution_from_outputs(Matrix{{1, 0}}, std::vector<int>{1}, 0.0, 1.0), DegeneracyError);
}

TEST(MarginDistribution, InvariantUnderLayerRescaling) {
  std::mt19937_64 rng(4);
  const Dataset ds = random_dataset(rng, 15, 4, 3);
  Network net = random_net(rng, 4, 5, 3);
  const auto base = margin_distribution(net, ds, spectral_complexity(layer_norms(net)));
  for (auto& layer : net.mutable_layers()) layer.weight *= 2.0;
  const auto scaled = margin_distribution(net, ds, spectral_complexity(layer_norms(net)));
  for (std::size_t i = 0; i < base.raw.size(); ++i) {
    EXPECT_NEAR(scaled.normalized[i], base.normalized[i], 1e-9 * (1.0 + std::abs(base.normalized[i])));
    EXPECT_NEAR(scaled.raw[i], margin_operator(forward(net, ds.x).row(i), ds.y[i]), 1e-12);
  }
}

TEST(Summarize, TwoPointHistogram) {
  const auto s = summarize(std::vector<double>{0.0, 1.0}, 2);
  ASSERT_EQ(s.histogram.size(), 2u);
  for (const auto& b : s.histogram) EXPECT_DOUBLE_EQ(b.density * (b.right - b.left), 0.5);
  EXPECT_THROW(summarize(std::vector<double>{0.0, 1.0}, 1), ParameterError);
}

TEST(Summarize, DensitiesIntegrateToOne) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  std::vector<double> v(2000);
  for (double& x : v) x = normal(rng);
  const auto s = summarize(v, 30);
  double mass = 0.0;
  for (const auto& b : s.histogram) mass += b.density * (b.right - b.left);
  EXPECT_NEAR(mass, 1.0, 1e-6);
  EXPECT_EQ(s.kde_x.size(), kKdePoints);
  EXPECT_NEAR(trapezoid(s.kde_x, s.kde_density), 1.0, 1e-6);
}

TEST(Summarize, KdeModeOfTightCluster) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal(3.0, 0.05);
  std::vector<double> v(500);
  for (double& x : v) x = normal(rng);
  const auto s = summarize(v, 10);
  std::size_t mode = 0;
  for (std::size_t i = 1; i < s.kde_density.size(); ++i)
    if (s.kde_density[i] > s.kde_density[mode]) mode = i;
  EXPECT_NEAR(s.kde_x[mode], 3.0, 0.1);
}

TEST(Summarize, ConstantDistributionIsDegenerateButNormalized) {
  const auto s = summarize(std::vector<double>{2.0, 2.0, 2.0}, 5);
  ASSERT_EQ(s.histogram.size(), 1u);
  EXPECT_EQ(s.histogram[0].density * (s.histogram[0].right - s.histogram[0].left), 1.0);
  EXPECT_EQ(s.bandwidth, kMinBandwidth);
  EXPECT_NEAR(trapezoid(s.kde_x, s.kde_density), 1.0, 1e-6);
}

TEST(Digest, QuantilesOfKnownData) {
  const auto d = digest(std::vector<double>{5, 1, 4, 2, 3});
  EXPECT_EQ(d.min, 1.0);
  EXPECT_EQ(d.max, 5.0);
  EXPECT_EQ(d.median, 3.0);
  EXPECT_EQ(d.mean, 3.0);
  EXPECT_DOUBLE_EQ(d.q10, 1.4);
}
