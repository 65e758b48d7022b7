#pragma once

// Strong (pathwise) error of a method against a fine-grid reference driven by
// the same Brownian path, with a log-log order fit.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "metroint/brownian.hpp"
#include "metroint/coupling.hpp"
#include "metroint/initial_condition.hpp"
#include "metroint/model.hpp"
#include "metroint/parallel.hpp"
#include "metroint/regression.hpp"
#include "metroint/rng.hpp"

namespace metroint {

struct ConvergenceStudyConfig {
  AnyModel model = make_zero_model(1.0);
  Method method = Method::mala;
  double horizon = 1.0;
  std::vector<double> step_sizes;  // strictly decreasing
  std::size_t fine_ratio = 64;     // smallest step / h_fine; power of two >= 64
  std::size_t realizations = 10000;
  InitialPolicy initial = InitialPolicy::fixed;
  Vector x0;  // position (q0 for inertial models)
  Vector p0;  // inertial only; defaults to zero
  std::optional<double> energy_bound;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 = all cores; never affects results
  double blowup_guard = 1e8;
  double max_discard_fraction = 1e-4;

  double fine_step() const {
    return *std::min_element(step_sizes.begin(), step_sizes.end()) / static_cast<double>(fine_ratio);
  }
};

struct ErrorAtStep {
  double h = 0.0;
  double rms = 0.0;
  double standard_error = 0.0;  // of the RMS, by the delta method
};

struct Discard {
  std::size_t realization = 0;
  std::string reason;
};

struct ConvergenceReport {
  std::vector<ErrorAtStep> errors;
  std::optional<OrderFit> fit;  // absent when some RMS error is exactly zero
  std::size_t realizations = 0;  // realizations that entered the averages
  std::vector<Discard> discards;
};

/// Raised when a study exceeds its discard budget or its accumulators stop
/// being finite.
class StudyAborted : public std::runtime_error {
 public:
  StudyAborted(const std::string& what, std::vector<Discard> discards)
      : std::runtime_error(what), discards_(std::move(discards)) {}
  const std::vector<Discard>& discards() const { return discards_; }

 private:
  std::vector<Discard> discards_;
};

namespace detail {

inline void validate(const ConvergenceStudyConfig& c) {
  auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
  if (std::holds_alternative<InertialModel>(c.model) != is_inertial(c.method))
    fail("method " + std::string(to_string(c.method)) + " does not match the model kind");
  if (c.step_sizes.empty()) fail("no step sizes given");
  if (c.realizations == 0) fail("realization count must be positive");
  if (c.fine_ratio < 64 || !std::has_single_bit(c.fine_ratio))
    fail("fine ratio must be a power of two >= 64");
  if (!(c.max_discard_fraction >= 0.0)) fail("discard fraction must be non-negative");
  for (std::size_t i = 0; i < c.step_sizes.size(); ++i) {
    if (!(c.step_sizes[i] > 0.0)) fail("step sizes must be positive");
    if (i > 0 && !(c.step_sizes[i] < c.step_sizes[i - 1])) fail("step sizes must be strictly decreasing");
  }
  const double hf = c.fine_step();
  grid_steps(c.horizon, hf);
  for (double h : c.step_sizes) {
    grid_steps(c.horizon, h);
    const double ratio = h / hf;
    if (std::abs(ratio - std::round(ratio)) > 1e-12 * ratio)
      fail("step " + std::to_string(h) + " is not a multiple of the fine step");
  }
}

}  // namespace detail

/// For each realization: one initial state, one fine Brownian grid, one
/// reference run, and one method run per step size on increments of that
/// grid. Coins for step size j come from metropolis lane j. Realizations run
/// in parallel; results land in per-realization slots and are reduced in
/// realization order.
inline ConvergenceReport strong_error_study(const ConvergenceStudyConfig& config) {
  detail::validate(config);
  const InitialConditionSampler init(config.model, config.initial, config.x0, config.p0,
                                     config.energy_bound);
  const double hf = config.fine_step();
  const std::size_t n_h = config.step_sizes.size();
  const std::size_t dim = potential_of(config.model).dimension();

  struct Slot {
    std::vector<double> squared;
    std::optional<std::string> discard;
  };
  std::vector<Slot> slots(config.realizations);

  parallel_for(config.realizations, config.threads, [&](std::size_t r) {
    Slot& slot = slots[r];
    const BrownianIncrementGrid grid =
        generate_brownian_grid(config.horizon, hf, dim, {config.seed, r, StreamRole::brownian, 0});
    slot.squared.assign(n_h, 0.0);
    if (const auto* pot = std::get_if<PotentialModel>(&config.model)) {
      const Vector x0 = init.position(config.seed, r);
      const auto ref = reference_trajectory(*pot, grid, x0, config.blowup_guard);
      if (!ref) {
        slot.discard = "reference blow-up";
        return;
      }
      Vector terminal;
      for (std::size_t j = 0; j < n_h; ++j) {
        const double h = config.step_sizes[j];
        const auto factor = static_cast<std::size_t>(std::round(h / hf));
        UniformStream coins({config.seed, r, StreamRole::metropolis_uniform, static_cast<std::uint32_t>(j)});
        if (run_coupled_overdamped(*pot, config.method, coarsen(grid, factor), x0, coins,
                                   config.blowup_guard, terminal)) {
          slot.discard = "method blow-up at h=" + std::to_string(h);
          return;
        }
        double e = 0.0;
        for (std::size_t i = 0; i < dim; ++i) e += (terminal[i] - (*ref)[i]) * (terminal[i] - (*ref)[i]);
        slot.squared[j] = e;
      }
    } else {
      const auto& model = std::get<InertialModel>(config.model);
      const PhaseState s0 = init.phase(config.seed, r);
      const auto ref = reference_trajectory(model, grid, s0, config.blowup_guard);
      if (!ref) {
        slot.discard = "reference blow-up";
        return;
      }
      PhaseState terminal;
      for (std::size_t j = 0; j < n_h; ++j) {
        const double h = config.step_sizes[j];
        UniformStream coins({config.seed, r, StreamRole::metropolis_uniform, static_cast<std::uint32_t>(j)});
        if (run_coupled_inertial(model, config.method, grid, h, s0, coins, config.blowup_guard,
                                 terminal)) {
          slot.discard = "method blow-up at h=" + std::to_string(h);
          return;
        }
        double e = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
          e += (terminal.q[i] - ref->q[i]) * (terminal.q[i] - ref->q[i]);
          e += (terminal.p[i] - ref->p[i]) * (terminal.p[i] - ref->p[i]);
        }
        slot.squared[j] = e;
      }
    }
  });

  ConvergenceReport report;
  for (std::size_t r = 0; r < slots.size(); ++r)
    if (slots[r].discard) report.discards.push_back({r, *slots[r].discard});
  const double discarded = static_cast<double>(report.discards.size());
  if (discarded > config.max_discard_fraction * static_cast<double>(config.realizations))
    throw StudyAborted(std::to_string(report.discards.size()) + " of " +
                           std::to_string(config.realizations) +
                           " realizations discarded, over the allowed fraction",
                       report.discards);
  report.realizations = config.realizations - report.discards.size();
  if (report.realizations < 2)
    throw StudyAborted("fewer than two usable realizations", report.discards);

  const auto n = static_cast<double>(report.realizations);
  bool positive = true;
  std::vector<double> hs, rms;
  for (std::size_t j = 0; j < n_h; ++j) {
    double sum = 0.0;
    for (const Slot& s : slots)
      if (!s.discard) sum += s.squared[j];
    const double mean = sum / n;
    double ss = 0.0;
    for (const Slot& s : slots)
      if (!s.discard) ss += (s.squared[j] - mean) * (s.squared[j] - mean);
    if (!std::isfinite(mean) || !std::isfinite(ss))
      throw StudyAborted("non-finite error accumulator at h=" + std::to_string(config.step_sizes[j]),
                         report.discards);
    const double root = std::sqrt(mean);
    const double se_mean = std::sqrt(ss / (n - 1.0) / n);
    report.errors.push_back({config.step_sizes[j], root, root > 0.0 ? se_mean / (2.0 * root) : 0.0});
    positive = positive && root > 0.0;
    hs.push_back(config.step_sizes[j]);
    rms.push_back(root);
  }
  if (positive && n_h >= 3) report.fit = fit_order(hs, rms);
  return report;
}

}  // namespace metroint
