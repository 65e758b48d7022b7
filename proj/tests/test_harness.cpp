#include <atomic>
#include <cmath>
#include <cstring>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "metroint/coupling.hpp"
#include "metroint/initial_condition.hpp"
#include "metroint/parallel.hpp"
#include "metroint/regression.hpp"
#include "metroint/rejection_rate.hpp"
#include "metroint/strong_error.hpp"

using namespace metroint;

namespace {

InertialModel harmonic() { return InertialModel(make_quadratic_model(1.0), 1.0, {1.0}); }

bool same_report(const ConvergenceReport& a, const ConvergenceReport& b) {
  if (a.errors.size() != b.errors.size() || a.realizations != b.realizations) return false;
  for (std::size_t j = 0; j < a.errors.size(); ++j)
    if (std::memcmp(&a.errors[j], &b.errors[j], sizeof(ErrorAtStep)) != 0) return false;
  if (a.fit.has_value() != b.fit.has_value()) return false;
  return !a.fit || std::memcmp(&*a.fit, &*b.fit, sizeof(OrderFit)) == 0;
}

ConvergenceStudyConfig small_mala_study() {
  ConvergenceStudyConfig c;
  c.model = make_quartic_model(1.0);
  c.method = Method::mala;
  c.step_sizes = {1.0 / 8, 1.0 / 16, 1.0 / 32};
  c.realizations = 200;
  c.initial = InitialPolicy::equilibrium;
  c.seed = 17;
  return c;
}

}  // namespace

TEST(Reference, ZeroPotentialIsExactDiffusion) {
  const auto m = make_zero_model(0.5, 2);
  const auto g = generate_brownian_grid(1.0, 1.0 / 256, 2, {1, 0});
  const auto y = reference_trajectory(m, g, Vector{1.0, -1.0});
  ASSERT_TRUE(y);
  const Vector w = terminal_value(g);
  EXPECT_NEAR((*y)[0], 1.0 + 2.0 * w[0], 1e-12);
  EXPECT_NEAR((*y)[1], -1.0 + 2.0 * w[1], 1e-12);
}

TEST(Reference, GuardDiscards) {
  const auto g = generate_brownian_grid(1.0, 1.0 / 64, 1, {1, 0});
  EXPECT_FALSE(reference_trajectory(make_quartic_model(1.0), g, Vector{100.0}));
  EXPECT_FALSE(reference_trajectory(InertialModel(make_quartic_model(1.0), 1.0, {1.0}), g, {{1000.0}, {0.0}}));
}

// Zero-noise harmonic reference against the damped oscillator
// q'' + q' + q = 0: error shrinks at least linearly in h_fine.
TEST(Reference, HarmonicInertialConvergesToDampedOscillator) {
  const auto m = harmonic();
  const double w = std::sqrt(3.0) / 2.0;
  const double q0 = 1.0, p0 = 0.5, t = 1.0;
  const double c = (p0 + 0.5 * q0) / w;
  const double q_exact = std::exp(-0.5 * t) * (q0 * std::cos(w * t) + c * std::sin(w * t));
  const double p_exact = -0.5 * q_exact + std::exp(-0.5 * t) * (-q0 * w * std::sin(w * t) + c * w * std::cos(w * t));
  double prev = 0.0;
  for (int k = 4; k <= 9; ++k) {
    const double hf = std::ldexp(1.0, -k);
    const BrownianIncrementGrid zero(t, hf, 1, std::vector<double>(grid_steps(t, hf), 0.0));
    const auto y = reference_trajectory(m, zero, {{q0}, {p0}});
    ASSERT_TRUE(y);
    const double err = std::hypot(y->q[0] - q_exact, y->p[0] - p_exact);
    EXPECT_LT(err, 2.0 * hf);
    if (prev > 0.0) {
      EXPECT_LT(err, 0.6 * prev);
    }
    prev = err;
  }
}

TEST(Reference, InertialMatchesIteratedGlaSteps) {
  const InertialModel m(make_quartic_model(1.0), 0.8, {1.5});
  const double hf = 1.0 / 128;
  const auto g = generate_brownian_grid(1.0, hf, 1, {2, 0});
  const PhaseState s0{{0.4}, {-0.3}};
  const auto ref = reference_trajectory(m, g, s0);
  ASSERT_TRUE(ref);
  PhaseState s = s0;
  for (std::size_t k = 0; 2 * k < g.rows(); ++k) {
    const double a = 2 * k * hf;
    const OuNoise xi1{coarse_ou_integral(g, m, a, a + hf)};
    const OuNoise xi2{coarse_ou_integral(g, m, a + hf, a + 2 * hf)};
    s = gla_step(m, s, 2 * hf, xi1, xi2);
  }
  EXPECT_NEAR(ref->q[0], s.q[0], 1e-12);
  EXPECT_NEAR(ref->p[0], s.p[0], 1e-12);

  // The coupled GLA run at h = 2 h_fine is the same chain.
  UniformStream coins({2, 0, StreamRole::metropolis_uniform, 0});
  PhaseState terminal;
  EXPECT_FALSE(run_coupled_inertial(m, Method::gla, g, 2 * hf, s0, coins, 1e8, terminal));
  EXPECT_NEAR(terminal.q[0], s.q[0], 1e-12);
  EXPECT_NEAR(terminal.p[0], s.p[0], 1e-12);
}

TEST(Coupling, ZeroPotentialMalaHitsTheReference) {
  const auto m = make_zero_model(1.0);
  const auto g = generate_brownian_grid(1.0, 1.0 / 4096, 1, {3, 0});
  const auto ref = reference_trajectory(m, g, Vector{0.2});
  for (std::size_t factor : {64u, 256u, 1024u}) {
    UniformStream coins({3, 0, StreamRole::metropolis_uniform, 0});
    Vector terminal;
    EXPECT_FALSE(run_coupled_overdamped(m, Method::mala, coarsen(g, factor), Vector{0.2}, coins, 1e8, terminal));
    EXPECT_LT(std::abs(terminal[0] - (*ref)[0]), 1e-10);
  }
}

TEST(Coupling, InertialStepMustSpanEvenRows) {
  const InertialModel m(make_quartic_model(1.0), 1.0, {1.0});
  const auto g = generate_brownian_grid(1.0, 1.0 / 64, 1, {4, 0});
  UniformStream coins({4, 0, StreamRole::metropolis_uniform, 0});
  PhaseState t;
  EXPECT_THROW(run_coupled_inertial(m, Method::magla, g, 3.0 / 64, {{0.0}, {0.0}}, coins, 1e8, t),
               std::invalid_argument);
  EXPECT_THROW(run_coupled_inertial(m, Method::mala, g, 2.0 / 64, {{0.0}, {0.0}}, coins, 1e8, t),
               std::invalid_argument);
}

TEST(FitOrder, ExactPowerLaws) {
  const std::vector<double> h = {0.5, 0.25, 0.125, 0.0625, 0.03125};
  for (double p : {1.0, 0.75, 1.5, 3.0}) {
    std::vector<double> e;
    for (double x : h) e.push_back(2.7 * std::pow(x, p));
    const auto fit = fit_order(h, e);
    EXPECT_NEAR(fit.slope, p, 1e-12);
    EXPECT_NEAR(fit.intercept, std::log(2.7), 1e-12);
    EXPECT_NEAR(fit.half_width, 0.0, 1e-10);
  }
}

TEST(FitOrder, NoisyLinear) {
  GaussianStream g({5, 0, StreamRole::brownian, 0});
  std::vector<double> h, e;
  for (int k = 2; k <= 9; ++k) {
    h.push_back(std::ldexp(1.0, -k));
    e.push_back(2.0 * h.back() * (1.0 + 0.01 * g.next()));
  }
  const auto fit = fit_order(h, e);
  EXPECT_GE(fit.slope, 0.97);
  EXPECT_LE(fit.slope, 1.03);
  EXPECT_GT(fit.half_width, 0.0);
  EXPECT_LT(fit.half_width, 0.03);
}

TEST(FitOrder, Errors) {
  EXPECT_THROW(fit_order(std::vector<double>{0.1, 0.2}, std::vector<double>{1, 2}), std::invalid_argument);
  EXPECT_THROW(fit_order(std::vector<double>{0.1, 0.2, 0.3}, std::vector<double>{1, 0, 2}), std::invalid_argument);
  EXPECT_THROW(fit_order(std::vector<double>{0.1, -0.2, 0.3}, std::vector<double>{1, 1, 2}), std::invalid_argument);
  EXPECT_THROW(fit_order(std::vector<double>{0.1, 0.2, 0.3}, std::vector<double>{1, 2}), std::invalid_argument);
}

TEST(Parallel, VisitsEveryIndexOnceAndRethrows) {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(100, 3,
                            [](std::size_t i) {
                              if (i == 37) throw std::runtime_error("boom");
                            }),
               std::runtime_error);
}

TEST(StrongError, ZeroPotentialMalaHasNoError) {
  ConvergenceStudyConfig c;
  c.model = make_zero_model(1.0);
  c.method = Method::mala;
  c.step_sizes = {1.0 / 4, 1.0 / 8, 1.0 / 16};
  c.realizations = 100;
  c.x0 = {0.5};
  const auto r = strong_error_study(c);
  ASSERT_EQ(r.errors.size(), 3u);
  EXPECT_EQ(r.realizations, 100u);
  for (const auto& e : r.errors) EXPECT_LE(e.rms, 1e-10);
}

TEST(StrongError, ReportIsIndependentOfThreadCount) {
  auto c = small_mala_study();
  c.threads = 1;
  const auto a = strong_error_study(c);
  c.threads = 3;
  const auto b = strong_error_study(c);
  c.threads = 1;
  const auto again = strong_error_study(c);
  EXPECT_TRUE(same_report(a, b));
  EXPECT_TRUE(same_report(a, again));
  ASSERT_TRUE(a.fit);
  for (const auto& e : a.errors) {
    EXPECT_GT(e.rms, 0.0);
    EXPECT_GT(e.standard_error, 0.0);
  }
}

TEST(StrongError, InertialThreadIndependenceAndShape) {
  ConvergenceStudyConfig c;
  c.model = InertialModel(make_quartic_model(1.0), 1.0, {1.0});
  c.method = Method::magla;
  c.step_sizes = {1.0 / 4, 1.0 / 8, 1.0 / 16};
  c.realizations = 100;
  c.x0 = {0.1};
  c.p0 = {0.0};
  c.seed = 3;
  c.threads = 1;
  const auto a = strong_error_study(c);
  c.threads = 2;
  EXPECT_TRUE(same_report(a, strong_error_study(c)));
  EXPECT_GT(a.errors[0].rms, a.errors[2].rms);
}

TEST(StrongError, ValidatesConfig) {
  auto c = small_mala_study();
  c.method = Method::magla;
  EXPECT_THROW(strong_error_study(c), std::invalid_argument);
  c = small_mala_study();
  c.fine_ratio = 32;
  EXPECT_THROW(strong_error_study(c), std::invalid_argument);
  c = small_mala_study();
  c.fine_ratio = 96;
  EXPECT_THROW(strong_error_study(c), std::invalid_argument);
  c = small_mala_study();
  c.step_sizes = {1.0 / 16, 1.0 / 8, 1.0 / 32};
  EXPECT_THROW(strong_error_study(c), std::invalid_argument);
  c = small_mala_study();
  c.step_sizes = {0.3, 0.1, 0.05};
  EXPECT_THROW(strong_error_study(c), std::invalid_argument);
  c = small_mala_study();
  c.realizations = 0;
  EXPECT_THROW(strong_error_study(c), std::invalid_argument);
  c = small_mala_study();
  c.initial = InitialPolicy::fixed;
  EXPECT_THROW(strong_error_study(c), std::invalid_argument);  // no x0
}

TEST(StrongError, AbortsWhenDiscardsExceedBudget) {
  ConvergenceStudyConfig c;
  c.model = make_quartic_model(1.0);
  c.method = Method::ula;
  c.horizon = 1.25;
  c.step_sizes = {0.3125, 0.15625, 0.078125};
  c.realizations = 20;
  c.x0 = {4.0};
  try {
    strong_error_study(c);
    FAIL() << "expected StudyAborted";
  } catch (const StudyAborted& e) {
    EXPECT_EQ(e.discards().size(), 20u);
    EXPECT_NE(e.discards().front().reason.find("method blow-up"), std::string::npos);
  }
}

TEST(StrongError, EnergyBound) {
  auto c = small_mala_study();
  c.initial = InitialPolicy::fixed;
  c.x0 = {2.0};
  c.energy_bound = 1.0;
  EXPECT_THROW(strong_error_study(c), std::invalid_argument);
  const InitialConditionSampler s(make_quartic_model(1.0), InitialPolicy::equilibrium, {}, {}, 0.01);
  for (std::uint64_t r = 0; r < 200; ++r) EXPECT_LE(std::pow(s.position(1, r)[0], 4) / 4, 0.01);
}

TEST(InitialConditions, FixedAndEquilibrium) {
  const InertialModel m(make_quartic_model(1.0), 1.0, {4.0});
  const InitialConditionSampler fixed(m, InitialPolicy::fixed, {0.1}, {}, std::nullopt);
  EXPECT_EQ(fixed.phase(1, 5).q, (Vector{0.1}));
  EXPECT_EQ(fixed.phase(1, 5).p, (Vector{0.0}));
  const InitialConditionSampler eq(m, InitialPolicy::equilibrium, {}, {}, std::nullopt);
  EXPECT_EQ(eq.phase(1, 5).q, eq.phase(1, 5).q);
  EXPECT_NE(eq.phase(1, 5).q, eq.phase(1, 6).q);
  double ss = 0.0;
  for (std::uint64_t r = 0; r < 20000; ++r) ss += std::pow(eq.momentum(2, r)[0], 2);
  EXPECT_NEAR(ss / 20000, 4.0, 0.1);
  EXPECT_THROW(InitialConditionSampler(make_quartic_model(1.0, 2), InitialPolicy::equilibrium, {}, {}, std::nullopt),
               std::invalid_argument);
}

// Halving h_fine (same Brownian path, reference on the finer grid) moves the
// coarsest-step RMS error by less than 5% in the MALA setting.
TEST(StrongError, FineStepSelfConsistency) {
  const auto model = make_quartic_model(1.0);
  const InitialConditionSampler init(model, InitialPolicy::equilibrium, {}, {}, std::nullopt);
  const double h_min = 1.0 / 512;  // coarse step 2^-4 is 2048 rows of the finer grid
  const int n = 2000;
  double s64 = 0.0, s128 = 0.0;
  for (int r = 0; r < n; ++r) {
    const Vector x0 = init.position(23, r);
    const auto fine = generate_brownian_grid(1.0, h_min / 128, 1, {23, std::uint64_t(r)});
    const auto half = coarsen(fine, 2);
    const auto y128 = reference_trajectory(model, fine, x0);
    const auto y64 = reference_trajectory(model, half, x0);
    ASSERT_TRUE(y128 && y64);
    UniformStream coins({23, std::uint64_t(r), StreamRole::metropolis_uniform, 0});
    Vector x;
    ASSERT_FALSE(run_coupled_overdamped(model, Method::mala, coarsen(fine, 2048), x0, coins, 1e8, x));
    s64 += std::pow(x[0] - (*y64)[0], 2);
    s128 += std::pow(x[0] - (*y128)[0], 2);
  }
  const double rms64 = std::sqrt(s64 / n), rms128 = std::sqrt(s128 / n);
  EXPECT_LT(std::abs(rms64 - rms128), 0.05 * rms128) << rms64 << " vs " << rms128;
}

TEST(RejectionRate, ZeroPotentialNeverRejects) {
  RejectionStudyConfig c;
  c.model = make_zero_model(1.0);
  c.method = Method::mala;
  c.step_sizes = {0.5, 0.25, 0.125};
  c.n_steps = 200;
  c.realizations = 10;
  c.initial = InitialPolicy::fixed;
  c.x0 = {0.0};
  const auto r = rejection_rate_study(c);
  for (const auto& x : r.rates) EXPECT_EQ(x.rate, 0.0);
  EXPECT_FALSE(r.fit);
}

TEST(RejectionRate, DeterministicAcrossThreadsAndDecreasing) {
  RejectionStudyConfig c;
  c.model = make_quartic_model(1.0);
  c.method = Method::mala;
  c.step_sizes = {0.25, 0.125, 0.0625, 0.03125};
  c.n_steps = 200;
  c.realizations = 20;
  c.seed = 4;
  c.threads = 1;
  const auto a = rejection_rate_study(c);
  c.threads = 3;
  const auto b = rejection_rate_study(c);
  for (std::size_t j = 0; j < a.rates.size(); ++j) {
    EXPECT_EQ(a.rates[j].rate, b.rates[j].rate);
    if (j > 0) {
      EXPECT_LT(a.rates[j].rate, a.rates[j - 1].rate);
    }
  }
  ASSERT_TRUE(a.fit);
  EXPECT_EQ(a.fit->slope, b.fit->slope);
}

TEST(RejectionRate, RejectsUnadjustedMethods) {
  RejectionStudyConfig c;
  c.model = make_quartic_model(1.0);
  c.method = Method::ula;
  c.step_sizes = {0.1};
  EXPECT_THROW(rejection_rate_study(c), std::invalid_argument);
}
