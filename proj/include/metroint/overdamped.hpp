#pragma once

// Overdamped Langevin chains: dY = -grad U(Y) dt + sqrt(2/beta) dW.
//
//   ULA    forward Euler-Maruyama
//   MALA   ULA proposal + Metropolis-Hastings accept/reject
//   MALTA  MALA with the proposal drift truncated to unit length
//
// Every step function takes its Brownian increment and Metropolis coin as
// inputs, so coupled runs can share the driving noise.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "metroint/model.hpp"
#include "metroint/rng.hpp"

namespace metroint {

struct OverdampedStepInput {
  std::span<const double> x;
  double h = 0.0;
  std::span<const double> brownian_increment;  // W(t+h) - W(t), variance h per component
  double uniform = 0.0;                        // Metropolis coin in [0, 1)
};

namespace detail {

inline void check_step_input(const PotentialModel& model, const OverdampedStepInput& in) {
  if (!(in.h > 0.0)) throw std::invalid_argument("step size must be positive");
  if (in.x.size() != model.dimension() || in.brownian_increment.size() != model.dimension())
    throw std::invalid_argument("state and Brownian increment must match the model dimension");
}

inline void check_uniform(double zeta) {
  if (!(zeta >= 0.0 && zeta < 1.0)) throw std::invalid_argument("Metropolis uniform must lie in [0, 1)");
}

inline void check_step_size(double h) {
  if (!(h > 0.0)) throw std::invalid_argument("step size must be positive");
}

/// Log of the Gaussian proposal density N(mean, 2 h / beta I) evaluated at y.
inline double log_gaussian_proposal(std::span<const double> mean, std::span<const double> y,
                                    double h, double beta) {
  const double var2 = 4.0 * h / beta;  // twice the per-component variance
  double r2 = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - mean[i];
    r2 += d * d;
  }
  return -0.5 * static_cast<double>(y.size()) * std::log(std::numbers::pi * var2) - r2 / var2;
}

}  // namespace detail

/// x' = x - h grad U(x) + sqrt(2/beta) dW. The result may be non-finite; the
/// caller decides whether that is a blow-up.
inline OverdampedState ula_step(const PotentialModel& model, const OverdampedStepInput& in) {
  detail::check_step_input(model, in);
  Vector y(model.dimension());
  model.gradient(in.x, y);
  const double noise = std::sqrt(2.0 / model.beta());
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = in.x[i] - in.h * y[i] + noise * in.brownian_increment[i];
  return {std::move(y)};
}

/// Log transition density of ULA from x to y.
inline double ula_log_density(const PotentialModel& model, std::span<const double> x,
                              std::span<const double> y, double h) {
  detail::check_step_size(h);
  Vector mean = model.gradient(x);
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = x[i] - h * mean[i];
  return detail::log_gaussian_proposal(mean, y, h, model.beta());
}

/// G(x, y) with q(y,x) pi(y) / (q(x,y) pi(x)) = exp(-beta G(x, y)) for the
/// untruncated ULA proposal.
inline double mala_log_ratio_g(const PotentialModel& model, std::span<const double> x,
                               std::span<const double> y, double h) {
  detail::check_step_size(h);
  const Vector gx = model.gradient(x);
  const Vector gy = model.gradient(y);
  double cross = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) cross += (gy[i] + gx[i]) * (y[i] - x[i]);
  return model.energy(y) - model.energy(x) - 0.5 * cross +
         0.25 * h * (squared_norm(gy) - squared_norm(gx));
}

/// 1 ^ exp(-beta G(x, y)).
inline double mala_acceptance(const PotentialModel& model, std::span<const double> x,
                              std::span<const double> y, double h) {
  const double g = mala_log_ratio_g(model, x, y, h);
  if (g <= 0.0) return 1.0;
  return std::exp(-model.beta() * g);
}

/// log[q(y,x) pi(y) / (q(x,y) pi(x))] assembled from explicit ULA densities.
/// Independent of the G shortcut; the normalization of pi cancels.
inline double mala_log_ratio_explicit(const PotentialModel& model, std::span<const double> x,
                                      std::span<const double> y, double h) {
  const double beta = model.beta();
  return -beta * model.energy(y) + ula_log_density(model, y, x, h) + beta * model.energy(x) -
         ula_log_density(model, x, y, h);
}

/// Accept iff zeta < alpha; a rejected step keeps x unchanged.
inline StepOutcome<OverdampedState> mala_step(const PotentialModel& model,
                                              const OverdampedStepInput& in) {
  detail::check_uniform(in.uniform);
  OverdampedState proposal = ula_step(model, in);
  StepOutcome<OverdampedState> out;
  out.acceptance = all_finite(proposal.x) ? mala_acceptance(model, in.x, proposal.x, in.h) : 0.0;
  out.accepted = in.uniform < out.acceptance;
  out.state = out.accepted ? proposal : OverdampedState{Vector(in.x.begin(), in.x.end())};
  out.proposal = std::move(proposal);
  return out;
}

/// h grad U(x) / (1 v h |grad U(x)|).
inline Vector malta_drift_term(const PotentialModel& model, std::span<const double> x, double h) {
  detail::check_step_size(h);
  Vector d = model.gradient(x);
  const double scale = h / std::max(1.0, h * std::sqrt(squared_norm(d)));
  for (double& v : d) v *= scale;
  return d;
}

/// Log density of the truncated-drift proposal from x to y.
inline double malta_log_proposal_density(const PotentialModel& model, std::span<const double> x,
                                         std::span<const double> y, double h) {
  Vector mean = malta_drift_term(model, x, h);
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = x[i] - mean[i];
  return detail::log_gaussian_proposal(mean, y, h, model.beta());
}

/// Full Metropolis-Hastings acceptance for the truncated proposal. The G
/// identity does not hold once truncation is active, so the density ratio is
/// evaluated explicitly.
inline double malta_acceptance(const PotentialModel& model, std::span<const double> x,
                               std::span<const double> y, double h) {
  const double beta = model.beta();
  const double log_ratio = -beta * model.energy(y) + malta_log_proposal_density(model, y, x, h) +
                           beta * model.energy(x) - malta_log_proposal_density(model, x, y, h);
  if (log_ratio >= 0.0) return 1.0;
  return std::exp(log_ratio);
}

inline StepOutcome<OverdampedState> malta_step(const PotentialModel& model,
                                               const OverdampedStepInput& in) {
  detail::check_step_input(model, in);
  detail::check_uniform(in.uniform);
  Vector y = malta_drift_term(model, in.x, in.h);
  const double noise = std::sqrt(2.0 / model.beta());
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = in.x[i] - y[i] + noise * in.brownian_increment[i];
  StepOutcome<OverdampedState> out;
  out.acceptance = malta_acceptance(model, in.x, y, in.h);
  out.accepted = in.uniform < out.acceptance;
  out.proposal = OverdampedState{std::move(y)};
  out.state = out.accepted ? out.proposal : OverdampedState{Vector(in.x.begin(), in.x.end())};
  return out;
}

/// One step of the named overdamped method.
inline StepOutcome<OverdampedState> overdamped_step(const PotentialModel& model, Method method,
                                                    const OverdampedStepInput& in) {
  switch (method) {
    case Method::ula: {
      StepOutcome<OverdampedState> out;
      out.proposal = ula_step(model, in);
      out.state = out.proposal;
      return out;
    }
    case Method::mala: return mala_step(model, in);
    case Method::malta: return malta_step(model, in);
    default: throw std::invalid_argument("not an overdamped method");
  }
}

/// B_h = {x : |1 - h x^2| > 1}, where the Euler drift of the quartic
/// potential expands.
inline bool in_instability_region(double x, double h) {
  return std::abs(1.0 - h * x * x) > 1.0;
}

struct ChainOptions {
  double blowup_guard = 1e8;
  bool zero_noise = false;  // deterministic drift-only run
};

template <class State>
struct ChainTrace {
  std::vector<StepOutcome<State>> steps;
  std::optional<BlowUp> blowup;

  bool blew_up() const { return blowup.has_value(); }
};

/// Runs n_steps of an overdamped chain, calling visit(k, outcome) after each
/// step. Brownian increments come from the (seed, stream) brownian substream
/// and coins from the metropolis substream. Stops early on blow-up.
template <class Visitor>
std::optional<BlowUp> for_each_overdamped_step(const PotentialModel& model, Method method,
                                               std::span<const double> x0, double h,
                                               std::size_t n_steps, const RngStreamSpec& rng,
                                               const ChainOptions& options, Visitor&& visit) {
  if (is_inertial(method)) throw std::invalid_argument("not an overdamped method");
  if (n_steps == 0) throw std::invalid_argument("chain needs at least one step");
  detail::check_step_size(h);
  if (x0.size() != model.dimension()) throw std::invalid_argument("x0 dimension mismatch");

  GaussianStream noise({rng.seed, rng.stream, StreamRole::brownian, rng.lane});
  UniformStream coins({rng.seed, rng.stream, StreamRole::metropolis_uniform, rng.lane});
  const double sqrt_h = std::sqrt(h);

  Vector x(x0.begin(), x0.end());
  Vector dw(model.dimension(), 0.0);
  for (std::size_t k = 0; k < n_steps; ++k) {
    for (double& v : dw) v = options.zero_noise ? 0.0 : sqrt_h * noise.next();
    const double zeta = is_metropolized(method) ? coins.next() : 0.0;
    auto outcome = overdamped_step(model, method, {x, h, dw, zeta});
    if (!all_finite(outcome.state.x) || max_abs(outcome.state.x) > options.blowup_guard)
      return BlowUp{k, std::move(outcome.state.x)};
    x = outcome.state.x;
    visit(k, outcome);
  }
  return std::nullopt;
}

inline ChainTrace<OverdampedState> run_overdamped_chain(const PotentialModel& model, Method method,
                                                        std::span<const double> x0, double h,
                                                        std::size_t n_steps,
                                                        const RngStreamSpec& rng,
                                                        const ChainOptions& options = {}) {
  ChainTrace<OverdampedState> trace;
  trace.steps.reserve(n_steps);
  trace.blowup = for_each_overdamped_step(
      model, method, x0, h, n_steps, rng, options,
      [&](std::size_t, StepOutcome<OverdampedState>& o) { trace.steps.push_back(std::move(o)); });
  return trace;
}

}  // namespace metroint
