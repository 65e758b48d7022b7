#pragma once

// Inertial Langevin integrators built from a Strang splitting
//
//   GLA = psi_{h/2} o theta_h o psi_{h/2}
//
// where psi is the exact Ornstein-Uhlenbeck flow on momenta and theta_h is a
// variational (symplectic) integrator defined by a discrete Lagrangian L_d.
// MAGLA adds a Metropolis step with momentum flip on rejection.
//
// Mass matrices are diagonal, so every exponential exp(-gamma M^{-1} t) acts
// elementwise.

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>

#include "metroint/model.hpp"
#include "metroint/overdamped.hpp"
#include "metroint/rng.hpp"

namespace metroint {

/// Partial derivatives of a discrete Lagrangian L_d(q0, q1, h), which define
/// the update p0 = -D1 L_d, p1 = D2 L_d.
struct DiscreteLagrangian {
  using Derivative = std::function<Vector(std::span<const double>, std::span<const double>, double)>;
  using LogDet = std::function<double(std::span<const double>, std::span<const double>, double)>;

  Derivative d1;
  Derivative d2;
  LogDet log_det_d12;  // log |det D12 L_d(q0, q1, h)|
  bool self_adjoint = false;
};

inline Vector verlet_d1(const InertialModel& model, std::span<const double> q0,
                        std::span<const double> q1, double h) {
  detail::check_step_size(h);
  Vector d = model.potential().gradient(q0);
  const auto& m = model.mass();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = -m[i] * (q1[i] - q0[i]) / h - 0.5 * h * d[i];
  return d;
}

inline Vector verlet_d2(const InertialModel& model, std::span<const double> q0,
                        std::span<const double> q1, double h) {
  detail::check_step_size(h);
  Vector d = model.potential().gradient(q1);
  const auto& m = model.mass();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = m[i] * (q1[i] - q0[i]) / h - 0.5 * h * d[i];
  return d;
}

/// L_d = (q1-q0)^T M (q1-q0) / (2h) - h (U(q0) + U(q1)) / 2. D12 L_d = -M/h.
inline DiscreteLagrangian verlet_lagrangian(const InertialModel& model) {
  DiscreteLagrangian ld;
  ld.d1 = [model](std::span<const double> q0, std::span<const double> q1, double h) {
    return verlet_d1(model, q0, q1, h);
  };
  ld.d2 = [model](std::span<const double> q0, std::span<const double> q1, double h) {
    return verlet_d2(model, q0, q1, h);
  };
  double log_mass = 0.0;
  for (double m : model.mass()) log_mass += std::log(m);
  ld.log_det_d12 = [log_mass, n = model.dimension()](std::span<const double>,
                                                      std::span<const double>, double h) {
    detail::check_step_size(h);
    return log_mass - static_cast<double>(n) * std::log(h);
  };
  ld.self_adjoint = true;
  return ld;
}

/// Stormer-Verlet (kick-drift-kick), the explicit solution of the discrete
/// Euler-Lagrange equations for verlet_lagrangian.
inline PhaseState verlet_map(const InertialModel& model, std::span<const double> q,
                             std::span<const double> p, double h) {
  detail::check_step_size(h);
  const auto& pot = model.potential();
  const auto& m = model.mass();
  PhaseState out{Vector(q.size()), Vector(p.size())};
  Vector g0 = pot.gradient(q);
  for (std::size_t i = 0; i < q.size(); ++i)
    out.q[i] = q[i] + h * p[i] / m[i] - 0.5 * h * h * g0[i] / m[i];
  Vector g1 = pot.gradient(out.q);
  for (std::size_t i = 0; i < p.size(); ++i) out.p[i] = p[i] - 0.5 * h * (g0[i] + g1[i]);
  return out;
}

/// exp(-gamma t / m_i).
inline double ou_decay(const InertialModel& model, std::size_t i, double duration) {
  return std::exp(-model.gamma() * duration / model.mass()[i]);
}

/// Per-component variance of the OU flow over `duration`:
/// (1 - exp(-2 gamma t / m_i)) m_i / beta.
inline Vector ou_variance(const InertialModel& model, double duration) {
  Vector v(model.dimension());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double m = model.mass()[i];
    v[i] = -std::expm1(-2.0 * model.gamma() * duration / m) * m / model.beta();
  }
  return v;
}

/// Additive noise of one OU half-step.
struct OuNoise {
  Vector xi;
};

inline OuNoise draw_ou_noise(const InertialModel& model, double duration, GaussianStream& rng) {
  OuNoise noise{ou_variance(model, duration)};
  for (double& v : noise.xi) v = std::sqrt(v) * rng.next();
  return noise;
}

/// psi_{h/2}: p' = exp(-gamma h / (2m)) p + xi.
inline Vector ou_half_step(const InertialModel& model, std::span<const double> p, double h,
                           const OuNoise& xi) {
  detail::check_step_size(h);
  if (xi.xi.size() != p.size()) throw std::invalid_argument("OU noise dimension mismatch");
  Vector out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = ou_decay(model, i, 0.5 * h) * p[i] + xi.xi[i];
  return out;
}

/// Log transition density of the OU flow over `duration` from p0 to p1
/// (standard Gaussian normalization, sqrt of det Sigma).
inline double ou_log_density(const InertialModel& model, std::span<const double> p0,
                             std::span<const double> p1, double duration) {
  if (!(duration > 0.0)) throw std::invalid_argument("OU duration must be positive");
  const Vector var = ou_variance(model, duration);
  double out = 0.0;
  for (std::size_t i = 0; i < p0.size(); ++i) {
    const double d = p1[i] - ou_decay(model, i, duration) * p0[i];
    out += -0.5 * std::log(2.0 * std::numbers::pi * var[i]) - 0.5 * d * d / var[i];
  }
  return out;
}

inline PhaseState gla_step(const InertialModel& model, const PhaseState& state, double h,
                           const OuNoise& xi1, const OuNoise& xi2) {
  const Vector p_half = ou_half_step(model, state.p, h, xi1);
  PhaseState s = verlet_map(model, state.q, p_half, h);
  s.p = ou_half_step(model, s.p, h, xi2);
  return s;
}

/// log q_h((q0,p0), (q1,p1)) = log|det D12 L_d| + log o_{h/2}(p0, -D1 L_d)
///                             + log o_{h/2}(D2 L_d, p1).
inline double gla_log_density(const InertialModel& model, const DiscreteLagrangian& ld,
                              const PhaseState& from, const PhaseState& to, double h) {
  detail::check_step_size(h);
  Vector p0_star = ld.d1(from.q, to.q, h);
  for (double& v : p0_star) v = -v;
  const Vector p1_star = ld.d2(from.q, to.q, h);
  return ld.log_det_d12(from.q, to.q, h) + ou_log_density(model, from.p, p0_star, 0.5 * h) +
         ou_log_density(model, p1_star, to.p, 0.5 * h);
}

/// Discrete energy change
///   dE = D2^T M^{-1} D2 / 2 + U(q1) - D1^T M^{-1} D1 / 2 - U(q0).
inline double delta_e(const InertialModel& model, const DiscreteLagrangian& ld,
                      std::span<const double> q0, std::span<const double> q1, double h) {
  const Vector d1 = ld.d1(q0, q1, h);
  const Vector d2 = ld.d2(q0, q1, h);
  // Grouped as two differences so that swapping q0, q1 negates the result exactly.
  return (model.kinetic_energy(d2) - model.kinetic_energy(d1)) +
         (model.potential().energy(q1) - model.potential().energy(q0));
}

/// delta_e specialized to the Verlet discrete Lagrangian:
///   U(q1) - U(q0) - <grad U(q1) + grad U(q0), q1 - q0> / 2
///   + h^2/8 (|grad U(q1)|^2_{M^-1} - |grad U(q0)|^2_{M^-1}).
inline double verlet_delta_e(const InertialModel& model, std::span<const double> q0,
                             std::span<const double> q1, double h) {
  detail::check_step_size(h);
  const auto& pot = model.potential();
  const Vector g0 = pot.gradient(q0);
  const Vector g1 = pot.gradient(q1);
  const auto& m = model.mass();
  double cross = 0.0;
  double w1 = 0.0;
  double w0 = 0.0;
  for (std::size_t i = 0; i < g0.size(); ++i) {
    cross += (g1[i] + g0[i]) * (q1[i] - q0[i]);
    w1 += g1[i] * g1[i] / m[i];
    w0 += g0[i] * g0[i] / m[i];
  }
  return pot.energy(q1) - pot.energy(q0) - 0.5 * cross + 0.125 * h * h * (w1 - w0);
}

/// 1 ^ exp(-beta dE(q0, q1)). Requires a self-adjoint L_d; the identity with
/// the density-ratio form does not hold otherwise.
inline double magla_acceptance(const InertialModel& model, const DiscreteLagrangian& ld,
                               const PhaseState& from, const PhaseState& to, double h) {
  if (!ld.self_adjoint)
    throw std::invalid_argument("MAGLA acceptance requires a self-adjoint discrete Lagrangian");
  const double de = delta_e(model, ld, from.q, to.q, h);
  if (de <= 0.0) return 1.0;
  return std::exp(-model.beta() * de);
}

/// Uncapped log acceptance ratio from explicit GLA densities with momentum
/// flips:
///   log q_h((q1,p1),(q0,-p0)) - beta H(q1,p1) - log q_h((q0,p0),(q1,-p1)) + beta H(q0,p0).
inline double magla_log_ratio_explicit(const InertialModel& model, const DiscreteLagrangian& ld,
                                       const PhaseState& from, const PhaseState& to, double h) {
  const double beta = model.beta();
  return gla_log_density(model, ld, to, flip(from), h) - beta * model.hamiltonian(to.q, to.p) -
         gla_log_density(model, ld, from, flip(to), h) + beta * model.hamiltonian(from.q, from.p);
}

/// MAGLA step. `ld` must be the discrete Lagrangian of the variational
/// integrator used by gla_step (Verlet). On rejection the state is (q, -p).
inline StepOutcome<PhaseState> magla_step(const InertialModel& model, const DiscreteLagrangian& ld,
                                          const PhaseState& state, double h, const OuNoise& xi1,
                                          const OuNoise& xi2, double zeta) {
  detail::check_uniform(zeta);
  StepOutcome<PhaseState> out;
  out.proposal = gla_step(model, state, h, xi1, xi2);
  const bool finite = all_finite(out.proposal.q) && all_finite(out.proposal.p);
  out.acceptance = finite ? magla_acceptance(model, ld, state, out.proposal, h) : 0.0;
  out.accepted = zeta < out.acceptance;
  out.state = out.accepted ? out.proposal : flip(state);
  return out;
}

inline StepOutcome<PhaseState> magla_step(const InertialModel& model, const PhaseState& state,
                                          double h, const OuNoise& xi1, const OuNoise& xi2,
                                          double zeta) {
  return magla_step(model, verlet_lagrangian(model), state, h, xi1, xi2, zeta);
}

/// Inertial counterpart of for_each_overdamped_step. OU noise is drawn exactly
/// in law, two independent half-step draws per step.
template <class Visitor>
std::optional<BlowUp> for_each_inertial_step(const InertialModel& model, Method method,
                                             const PhaseState& state0, double h,
                                             std::size_t n_steps, const RngStreamSpec& rng,
                                             const ChainOptions& options, Visitor&& visit) {
  if (!is_inertial(method)) throw std::invalid_argument("not an inertial method");
  if (n_steps == 0) throw std::invalid_argument("chain needs at least one step");
  detail::check_step_size(h);
  if (state0.q.size() != model.dimension() || state0.p.size() != model.dimension())
    throw std::invalid_argument("initial state dimension mismatch");

  GaussianStream noise({rng.seed, rng.stream, StreamRole::brownian, rng.lane});
  UniformStream coins({rng.seed, rng.stream, StreamRole::metropolis_uniform, rng.lane});
  const DiscreteLagrangian ld = verlet_lagrangian(model);
  const Vector sd = [&] {
    Vector v = ou_variance(model, 0.5 * h);
    for (double& x : v) x = std::sqrt(x);
    return v;
  }();

  PhaseState s = state0;
  OuNoise xi1{Vector(model.dimension(), 0.0)};
  OuNoise xi2{Vector(model.dimension(), 0.0)};
  for (std::size_t k = 0; k < n_steps; ++k) {
    if (!options.zero_noise) {
      for (std::size_t i = 0; i < sd.size(); ++i) xi1.xi[i] = sd[i] * noise.next();
      for (std::size_t i = 0; i < sd.size(); ++i) xi2.xi[i] = sd[i] * noise.next();
    }
    StepOutcome<PhaseState> outcome;
    if (method == Method::magla) {
      outcome = magla_step(model, ld, s, h, xi1, xi2, coins.next());
    } else {
      outcome.proposal = gla_step(model, s, h, xi1, xi2);
      outcome.state = outcome.proposal;
    }
    const bool bad = !all_finite(outcome.state.q) || !all_finite(outcome.state.p) ||
                     max_abs(outcome.state.q) > options.blowup_guard ||
                     max_abs(outcome.state.p) > options.blowup_guard;
    if (bad) return BlowUp{k, std::move(outcome.state.q)};
    s = outcome.state;
    visit(k, outcome);
  }
  return std::nullopt;
}

inline ChainTrace<PhaseState> run_inertial_chain(const InertialModel& model, Method method,
                                                 const PhaseState& state0, double h,
                                                 std::size_t n_steps, const RngStreamSpec& rng,
                                                 const ChainOptions& options = {}) {
  ChainTrace<PhaseState> trace;
  trace.steps.reserve(n_steps);
  trace.blowup = for_each_inertial_step(
      model, method, state0, h, n_steps, rng, options,
      [&](std::size_t, StepOutcome<PhaseState>& o) { trace.steps.push_back(std::move(o)); });
  return trace;
}

}  // namespace metroint
