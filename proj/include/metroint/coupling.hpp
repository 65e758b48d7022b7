#pragma once

// Pathwise coupling of integrators to one Brownian path: the fine-step
// reference trajectory and coarse-step method runs driven by increments of the
// same grid.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>

#include "metroint/brownian.hpp"
#include "metroint/inertial.hpp"
#include "metroint/model.hpp"
#include "metroint/overdamped.hpp"
#include "metroint/rng.hpp"

namespace metroint {

struct NoVisit {
  template <class... Args>
  void operator()(Args&&...) const {}
};

/// Euler-Maruyama at the grid's fine step over every row. visit(i, x) sees
/// the state after row i. Returns nullopt if |x|_inf exceeds `guard` or the
/// state becomes non-finite.
template <class Visitor = NoVisit>
std::optional<Vector> reference_trajectory(const PotentialModel& model,
                                           const BrownianIncrementGrid& grid,
                                           std::span<const double> x0, double guard = 1e8,
                                           Visitor&& visit = {}) {
  if (x0.size() != model.dimension() || grid.dimension() != model.dimension())
    throw std::invalid_argument("reference trajectory dimension mismatch");
  const double hf = grid.fine_step();
  const double noise = std::sqrt(2.0 / model.beta());
  Vector x(x0.begin(), x0.end());
  Vector g(x.size());
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    model.gradient(x, g);
    const auto dw = grid.row(r);
    bool ok = true;
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = x[i] - hf * g[i] + noise * dw[i];
      ok = ok && std::abs(x[i]) <= guard;
    }
    if (!ok) return std::nullopt;
    visit(r, std::as_const(x));
  }
  return x;
}

/// GLA at step 2 h_f: each OU half-step consumes exactly one fine row, with
/// the same left-point weights as coarse_ou_integral. visit(k, state) sees
/// the state after reference step k (time 2 (k+1) h_f).
template <class Visitor = NoVisit>
std::optional<PhaseState> reference_trajectory(const InertialModel& model,
                                               const BrownianIncrementGrid& grid,
                                               const PhaseState& s0, double guard = 1e8,
                                               Visitor&& visit = {}) {
  const std::size_t n = model.dimension();
  if (s0.q.size() != n || s0.p.size() != n || grid.dimension() != n)
    throw std::invalid_argument("reference trajectory dimension mismatch");
  if (grid.rows() % 2 != 0)
    throw std::invalid_argument("inertial reference needs an even number of fine rows");
  const double hf = grid.fine_step();
  const double h = 2.0 * hf;
  const auto& m = model.mass();
  const auto& pot = model.potential();
  const double prefactor = std::sqrt(2.0 * model.gamma() / model.beta());
  Vector decay(n);
  for (std::size_t i = 0; i < n; ++i) decay[i] = ou_decay(model, i, hf);

  PhaseState s = s0;
  Vector g0(n), g1(n);
  pot.gradient(s.q, g0);
  for (std::size_t k = 0; 2 * k < grid.rows(); ++k) {
    const auto w1 = grid.row(2 * k);
    const auto w2 = grid.row(2 * k + 1);
    for (std::size_t i = 0; i < n; ++i) {
      s.p[i] = decay[i] * s.p[i] + prefactor * decay[i] * w1[i];
      s.q[i] = s.q[i] + h * s.p[i] / m[i] - 0.5 * h * h * g0[i] / m[i];
    }
    pot.gradient(s.q, g1);
    bool ok = true;
    for (std::size_t i = 0; i < n; ++i) {
      s.p[i] = s.p[i] - 0.5 * h * (g0[i] + g1[i]);
      s.p[i] = decay[i] * s.p[i] + prefactor * decay[i] * w2[i];
      ok = ok && std::abs(s.q[i]) <= guard && std::abs(s.p[i]) <= guard;
    }
    if (!ok) return std::nullopt;
    std::swap(g0, g1);
    visit(k, std::as_const(s));
  }
  return s;
}

/// Runs an overdamped method whose k-th Brownian increment is row k of
/// `increments` (a grid coarsened to the method's step). visit(k, outcome).
template <class Visitor = NoVisit>
std::optional<BlowUp> run_coupled_overdamped(const PotentialModel& model, Method method,
                                             const BrownianIncrementGrid& increments,
                                             std::span<const double> x0, UniformStream& coins,
                                             double guard, Vector& terminal,
                                             Visitor&& visit = {}) {
  const double h = increments.fine_step();
  Vector x(x0.begin(), x0.end());
  for (std::size_t k = 0; k < increments.rows(); ++k) {
    const double zeta = is_metropolized(method) ? coins.next() : 0.0;
    auto outcome = overdamped_step(model, method, {x, h, increments.row(k), zeta});
    if (!all_finite(outcome.state.x) || max_abs(outcome.state.x) > guard)
      return BlowUp{k, std::move(outcome.state.x)};
    x = outcome.state.x;
    visit(k, std::as_const(outcome));
  }
  terminal = std::move(x);
  return std::nullopt;
}

/// Runs GLA or MAGLA at step h on OU integrals built from the fine grid.
template <class Visitor = NoVisit>
std::optional<BlowUp> run_coupled_inertial(const InertialModel& model, Method method,
                                           const BrownianIncrementGrid& fine, double h,
                                           const PhaseState& s0, UniformStream& coins,
                                           double guard, PhaseState& terminal,
                                           Visitor&& visit = {}) {
  if (!is_inertial(method)) throw std::invalid_argument("not an inertial method");
  const std::size_t rows_per_step = detail::rows_per_step(fine, h);
  if (rows_per_step % 2 != 0)
    throw std::invalid_argument("inertial step must span an even number of fine rows");
  const std::size_t half = rows_per_step / 2;
  const std::size_t steps = fine.rows() / rows_per_step;
  const DiscreteLagrangian ld = verlet_lagrangian(model);
  OuNoise xi1{Vector(model.dimension())};
  OuNoise xi2{Vector(model.dimension())};
  PhaseState s = s0;
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t start = k * rows_per_step;
    detail::ou_integral_rows(fine, model, start, start + half, xi1.xi);
    detail::ou_integral_rows(fine, model, start + half, start + rows_per_step, xi2.xi);
    StepOutcome<PhaseState> outcome;
    if (method == Method::magla) {
      outcome = magla_step(model, ld, s, h, xi1, xi2, coins.next());
    } else {
      outcome.proposal = gla_step(model, s, h, xi1, xi2);
      outcome.state = outcome.proposal;
    }
    const bool bad = !all_finite(outcome.state.q) || !all_finite(outcome.state.p) ||
                     max_abs(outcome.state.q) > guard || max_abs(outcome.state.p) > guard;
    if (bad) return BlowUp{k, std::move(outcome.state.q)};
    s = outcome.state;
    visit(k, std::as_const(outcome));
  }
  terminal = std::move(s);
  return std::nullopt;
}

}  // namespace metroint
