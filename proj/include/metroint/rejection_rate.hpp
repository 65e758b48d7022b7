#pragma once

// Mean rejection probability E[1 - alpha] of a Metropolized chain as a
// function of the step size.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "metroint/inertial.hpp"
#include "metroint/initial_condition.hpp"
#include "metroint/overdamped.hpp"
#include "metroint/parallel.hpp"
#include "metroint/regression.hpp"
#include "metroint/strong_error.hpp"

namespace metroint {

struct RejectionStudyConfig {
  AnyModel model = make_zero_model(1.0);
  Method method = Method::mala;
  std::vector<double> step_sizes;
  std::size_t n_steps = 1000;
  std::size_t realizations = 100;
  InitialPolicy initial = InitialPolicy::equilibrium;
  Vector x0;
  Vector p0;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  double blowup_guard = 1e8;
};

struct RejectionAtStep {
  double h = 0.0;
  double rate = 0.0;            // mean of 1 - alpha over steps and realizations
  double standard_error = 0.0;  // across realizations
};

struct RejectionReport {
  std::vector<RejectionAtStep> rates;
  std::optional<OrderFit> fit;  // absent when some rate is exactly zero
  std::size_t realizations = 0;
};

/// Common random numbers: realization r uses the same initial state, the
/// same standard normals and the same coins at every h, so the h-dependence
/// is not buried in Monte Carlo noise. A blow-up aborts the study.
inline RejectionReport rejection_rate_study(const RejectionStudyConfig& config) {
  if (!is_metropolized(config.method))
    throw std::invalid_argument("rejection rates need a Metropolized method");
  if (std::holds_alternative<InertialModel>(config.model) != is_inertial(config.method))
    throw std::invalid_argument("method does not match the model kind");
  if (config.step_sizes.empty() || config.n_steps == 0 || config.realizations < 2)
    throw std::invalid_argument("rejection study needs step sizes, steps and at least two realizations");
  for (double h : config.step_sizes)
    if (!(h > 0.0)) throw std::invalid_argument("step sizes must be positive");

  const InitialConditionSampler init(config.model, config.initial, config.x0, config.p0, std::nullopt);
  const std::size_t n_h = config.step_sizes.size();
  std::vector<std::vector<double>> slots(config.realizations, std::vector<double>(n_h, 0.0));
  const ChainOptions options{config.blowup_guard, false};

  parallel_for(config.realizations, config.threads, [&](std::size_t r) {
    const RngStreamSpec rng{config.seed, r, StreamRole::brownian, 0};
    for (std::size_t j = 0; j < n_h; ++j) {
      const double h = config.step_sizes[j];
      double sum = 0.0;
      auto add = [&](std::size_t, const auto& outcome) { sum += 1.0 - outcome.acceptance; };
      std::optional<BlowUp> blowup;
      if (const auto* pot = std::get_if<PotentialModel>(&config.model)) {
        blowup = for_each_overdamped_step(*pot, config.method, init.position(config.seed, r), h,
                                          config.n_steps, rng, options, add);
      } else {
        blowup = for_each_inertial_step(std::get<InertialModel>(config.model), config.method,
                                        init.phase(config.seed, r), h, config.n_steps, rng,
                                        options, add);
      }
      if (blowup)
        throw StudyAborted("chain blew up at h=" + std::to_string(h),
                           {{r, "blow-up at step " + std::to_string(blowup->step)}});
      slots[r][j] = sum / static_cast<double>(config.n_steps);
    }
  });

  RejectionReport report;
  report.realizations = config.realizations;
  const auto n = static_cast<double>(config.realizations);
  bool positive = true;
  std::vector<double> hs, rates;
  for (std::size_t j = 0; j < n_h; ++j) {
    double sum = 0.0;
    for (const auto& s : slots) sum += s[j];
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& s : slots) ss += (s[j] - mean) * (s[j] - mean);
    report.rates.push_back({config.step_sizes[j], mean, std::sqrt(ss / (n - 1.0) / n)});
    positive = positive && mean > 0.0;
    hs.push_back(config.step_sizes[j]);
    rates.push_back(mean);
  }
  if (positive && n_h >= 3) report.fit = fit_order(hs, rates);
  return report;
}

}  // namespace metroint
