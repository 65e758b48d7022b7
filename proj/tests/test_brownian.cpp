#include <cmath>
#include <cstring>
#include <vector>

#include <gtest/gtest.h>

#include "metroint/brownian.hpp"

using namespace metroint;

namespace {

bool same_bits(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
  return true;
}

}  // namespace

TEST(GridSteps, IntegralityCheck) {
  EXPECT_EQ(grid_steps(1.0, 0.125), 8u);
  EXPECT_EQ(grid_steps(1.0, 0.1), 10u);
  EXPECT_THROW(grid_steps(1.0, 0.3), std::invalid_argument);
  EXPECT_THROW(grid_steps(1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(grid_steps(0.1, 1.0), std::invalid_argument);
  EXPECT_THROW(generate_brownian_grid(1.0, 0.3, 1, {}), std::invalid_argument);
}

TEST(Grid, ShapeAndDeterminism) {
  const RngStreamSpec spec{5, 2, StreamRole::brownian, 0};
  const auto a = generate_brownian_grid(1.0, 1.0 / 64, 3, spec);
  const auto b = generate_brownian_grid(1.0, 1.0 / 64, 3, spec);
  EXPECT_EQ(a.rows(), 64u);
  EXPECT_EQ(a.dimension(), 3u);
  EXPECT_EQ(a.data().size(), 192u);
  EXPECT_TRUE(same_bits(a.data(), b.data()));
  const auto c = generate_brownian_grid(1.0, 1.0 / 64, 3, {5, 3, StreamRole::brownian, 0});
  EXPECT_FALSE(same_bits(a.data(), c.data()));
}

TEST(Grid, RoleIsForcedToBrownian) {
  const auto a = generate_brownian_grid(1.0, 0.25, 1, {5, 2, StreamRole::metropolis_uniform, 0});
  const auto b = generate_brownian_grid(1.0, 0.25, 1, {5, 2, StreamRole::brownian, 0});
  EXPECT_TRUE(same_bits(a.data(), b.data()));
}

TEST(Grid, CoarsenByOneIsIdentity) {
  const auto g = generate_brownian_grid(2.0, 0.125, 2, {1, 0});
  const auto c = coarsen(g, 1);
  EXPECT_TRUE(same_bits(g.data(), c.data()));
  EXPECT_EQ(c.fine_step(), g.fine_step());
}

TEST(Grid, TerminalVarianceIsHorizon) {
  const double horizon = 2.0;
  const int n = 10000;
  double ss = 0.0, s = 0.0;
  for (int r = 0; r < n; ++r) {
    const double w = terminal_value(generate_brownian_grid(horizon, horizon / 32, 1, {99, std::uint64_t(r)}))[0];
    s += w;
    ss += w * w;
  }
  const double var = ss / n - (s / n) * (s / n);
  EXPECT_NEAR(var, horizon, 0.05 * horizon);
}

TEST(Grid, PartialSumVarianceGrowsLinearly) {
  const int n = 5000;
  std::vector<double> ss(4, 0.0);
  for (int r = 0; r < n; ++r) {
    const auto g = generate_brownian_grid(1.0, 1.0 / 64, 1, {98, std::uint64_t(r)});
    double w = 0.0;
    for (std::size_t i = 0; i < 64; ++i) {
      w += g.row(i)[0];
      if ((i + 1) % 16 == 0) ss[i / 16] += w * w;
    }
  }
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(ss[k] / n, 0.25 * (k + 1), 0.08 * 0.25 * (k + 1));
}

TEST(CoarseIncrement, FineStepReturnsTheRow) {
  const auto g = generate_brownian_grid(1.0, 1.0 / 16, 2, {3, 0});
  for (std::size_t k = 0; k < 16; ++k) EXPECT_TRUE(same_bits(coarse_increment(g, 1.0 / 16, k), g.row(k)));
  EXPECT_THROW(coarse_increment(g, 1.0 / 16, 16), std::out_of_range);
  EXPECT_THROW(coarse_increment(g, 0.1, 0), std::invalid_argument);
}

TEST(CoarseIncrement, NestedStepsAgreeExactly) {
  const auto g = generate_brownian_grid(1.0, 1.0 / 512, 2, {4, 0});
  for (double h : {1.0 / 256, 1.0 / 32, 1.0 / 4, 1.0 / 2}) {
    const std::size_t steps = grid_steps(1.0, h);
    for (std::size_t k = 0; k < steps; ++k) {
      const Vector whole = coarse_increment(g, h, k);
      const Vector a = coarse_increment(g, h / 2, 2 * k), b = coarse_increment(g, h / 2, 2 * k + 1);
      for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(whole[c], a[c] + b[c]);
    }
  }
}

TEST(CoarseIncrement, SumOverStepsIsTerminalValue) {
  const auto g = generate_brownian_grid(1.0, 1.0 / 256, 1, {6, 0});
  const double w = terminal_value(g)[0];
  for (std::size_t factor : {1u, 4u, 16u, 256u}) {
    const auto c = coarsen(g, factor);
    const auto top = coarsen(c, c.rows());
    EXPECT_EQ(top.row(0)[0], w) << factor;
  }
  double sequential = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i) sequential += g.row(i)[0];
  EXPECT_NEAR(sequential, w, 1e-13);
}

TEST(Coarsen, MatchesCoarseIncrementBitForBit) {
  const auto g = generate_brownian_grid(1.0, 1.0 / 384, 2, {7, 0});
  for (std::size_t factor : {2u, 3u, 8u, 12u, 128u}) {
    const auto c = coarsen(g, factor);
    EXPECT_DOUBLE_EQ(c.fine_step(), factor / 384.0);
    for (std::size_t k = 0; k < c.rows(); ++k)
      EXPECT_TRUE(same_bits(c.row(k), coarse_increment(g, c.fine_step(), k))) << factor << " " << k;
  }
  EXPECT_THROW(coarsen(g, 5), std::invalid_argument);
  EXPECT_THROW(coarsen(g, 0), std::invalid_argument);
}

TEST(Coarsen, ComposesExactly) {
  const auto g = generate_brownian_grid(1.0, 1.0 / 1024, 1, {8, 0});
  const auto direct = coarsen(g, 64);
  EXPECT_TRUE(same_bits(direct.data(), coarsen(coarsen(g, 8), 8).data()));
  EXPECT_TRUE(same_bits(direct.data(), coarsen(coarsen(g, 2), 32).data()));
  EXPECT_TRUE(same_bits(direct.data(), coarsen(coarsen(coarsen(g, 4), 4), 4).data()));
}

TEST(OuIntegral, SingleFineStep) {
  const InertialModel m(make_zero_model(2.0), 0.5, {1.5});
  const auto g = generate_brownian_grid(1.0, 1.0 / 8, 1, {9, 0});
  const double got = coarse_ou_integral(g, m, 0.25, 0.375)[0];
  const double want = std::sqrt(2.0 * 0.5 / 2.0) * std::exp(-0.5 * 0.125 / 1.5) * g.row(2)[0];
  EXPECT_DOUBLE_EQ(got, want);
}

TEST(OuIntegral, VanishesWithFriction) {
  const InertialModel m(make_zero_model(1.0), 1e-14, {1.0});
  const auto g = generate_brownian_grid(1.0, 1.0 / 64, 1, {10, 0});
  EXPECT_LT(std::abs(coarse_ou_integral(g, m, 0.0, 1.0)[0]), 1e-6);
}

TEST(OuIntegral, EndpointsMustBeOnGrid) {
  const auto m = InertialModel(make_zero_model(1.0), 1.0, {1.0});
  const auto g = generate_brownian_grid(1.0, 1.0 / 8, 1, {11, 0});
  EXPECT_THROW(coarse_ou_integral(g, m, 0.1, 0.5), std::invalid_argument);
  EXPECT_THROW(coarse_ou_integral(g, m, 0.5, 0.5), std::invalid_argument);
  EXPECT_THROW(coarse_ou_integral(g, m, 0.5, 1.125), std::invalid_argument);
}

TEST(OuIntegral, EnsembleVarianceMatchesIsometry) {
  const InertialModel m(make_zero_model(1.0), 1.0, {1.0});
  const double duration = 0.1;
  const int n = 100000;
  double ss = 0.0;
  for (int r = 0; r < n; ++r) {
    const auto g = generate_brownian_grid(duration, duration / 64, 1, {12, std::uint64_t(r)});
    const double x = coarse_ou_integral(g, m, 0.0, duration)[0];
    ss += x * x;
  }
  const double sigma = 1.0 - std::exp(-2.0 * duration);
  EXPECT_NEAR(ss / n, sigma, 0.05 * sigma);
}
