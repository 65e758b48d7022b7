#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "metroint/equilibrium.hpp"

using namespace metroint;

namespace {

std::vector<double> draw(const EquilibriumDistribution1D& pi, std::size_t n, std::uint64_t seed) {
  UniformStream u({seed, 0, StreamRole::initial_condition, 0});
  std::vector<double> x(n);
  for (double& v : x) v = equilibrium_sample_1d(pi, u);
  return x;
}

}  // namespace

TEST(Equilibrium, FrozenQuarticValues) {
  const EquilibriumDistribution1D pi(make_quartic_model(1.0));
  EXPECT_NEAR(pi.cdf(1.0), 0.87183897236573052, 1e-10);
  EXPECT_NEAR(pi.cdf(-0.5), 0.30557571095353102, 1e-10);
  EXPECT_NEAR(pi.cdf(0.0), 0.5, 1e-12);
  EXPECT_NEAR(pi.log_normalization(), 0.94144893441810480, 1e-10);
  EXPECT_NEAR(pi.expectation([](double x) { return std::pow(x, 4) / 4; }), 0.25, 1e-10);
  const EquilibriumDistribution1D wide(make_quartic_model(0.01));
  EXPECT_NEAR(wide.log_normalization(), 2.0927414809151276, 1e-10);
}

TEST(Equilibrium, GaussianAgreesWithNormalCdf) {
  const EquilibriumDistribution1D pi(make_quadratic_model(2.0));
  for (double x : {-2.0, -0.7, 0.0, 0.3, 1.5})
    EXPECT_NEAR(pi.cdf(x), normal_cdf(x, 0.5), 1e-12);
  EXPECT_NEAR(pi.density(0.0), 1.0 / std::sqrt(std::numbers::pi), 1e-12);
}

TEST(Equilibrium, InverseCdfRoundTrip) {
  const EquilibriumDistribution1D pi(make_quartic_model(1.0));
  for (double u : {1e-6, 0.01, 0.25, 0.5, 0.8, 0.999}) EXPECT_NEAR(pi.cdf(pi.inverse_cdf(u)), u, 1e-10);
  EXPECT_LE(pi.inverse_cdf(0.2), pi.inverse_cdf(0.3));
}

TEST(Equilibrium, SamplesMatchTheTarget) {
  const EquilibriumDistribution1D pi(make_quartic_model(1.0));
  auto x = draw(pi, 100000, 1);
  double mean_u = 0.0, ss = 0.0;
  for (double v : x) mean_u += std::pow(v, 4) / 4;
  mean_u /= x.size();
  for (double v : x) ss += std::pow(std::pow(v, 4) / 4 - mean_u, 2);
  const double se = std::sqrt(ss / (x.size() - 1) / x.size());
  EXPECT_LT(std::abs(mean_u - 0.25), 3.0 * se);
  EXPECT_LT(ks_distance(x, [&](double v) { return pi.cdf(v); }), 0.006);
  std::nth_element(x.begin(), x.begin() + x.size() / 2, x.end());
  EXPECT_LT(std::abs(x[x.size() / 2]), 0.02);
}

TEST(Equilibrium, Deterministic) {
  const EquilibriumDistribution1D pi(make_quartic_model(1.0));
  EXPECT_EQ(draw(pi, 100, 4), draw(pi, 100, 4));
  EXPECT_NE(draw(pi, 100, 4), draw(pi, 100, 5));
}

TEST(Equilibrium, Errors) {
  EXPECT_THROW(EquilibriumDistribution1D(make_zero_model(1.0)), ModelError);
  EXPECT_THROW(EquilibriumDistribution1D(make_quartic_model(1.0, 2)), std::invalid_argument);
}

TEST(KsDistance, Examples) {
  auto std_normal = [](double x) { return normal_cdf(x); };
  EXPECT_DOUBLE_EQ(ks_distance({0.0}, std_normal), 0.5);
  EXPECT_NEAR(ks_distance(std::vector<double>(10, 40.0), std_normal), 1.0, 1e-12);
  EXPECT_NEAR(ks_distance({-1.0, 1.0}, std_normal), 0.5 - normal_cdf(-1.0), 1e-15);
  EXPECT_THROW(ks_distance({}, std_normal), std::invalid_argument);
}
