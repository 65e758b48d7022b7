#pragma once

// Initial conditions for ensembles: a fixed point, or draws from the
// equilibrium density exp(-beta U) (times the Maxwellian for inertial models).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <variant>

#include "metroint/equilibrium.hpp"
#include "metroint/model.hpp"
#include "metroint/rng.hpp"

namespace metroint {

enum class InitialPolicy { fixed, equilibrium };

using AnyModel = std::variant<PotentialModel, InertialModel>;

inline const PotentialModel& potential_of(const AnyModel& model) {
  if (const auto* p = std::get_if<PotentialModel>(&model)) return *p;
  return std::get<InertialModel>(model).potential();
}

/// Draws realization-indexed initial states. Thread-safe once constructed.
class InitialConditionSampler {
 public:
  InitialConditionSampler(AnyModel model, InitialPolicy policy, Vector x0, Vector p0,
                          std::optional<double> energy_bound)
      : model_(std::move(model)),
        policy_(policy),
        x0_(std::move(x0)),
        p0_(std::move(p0)),
        energy_bound_(energy_bound) {
    const PotentialModel& pot = potential_of(model_);
    const bool inertial = std::holds_alternative<InertialModel>(model_);
    if (policy_ == InitialPolicy::fixed) {
      if (x0_.size() != pot.dimension())
        throw std::invalid_argument("initial position has the wrong dimension");
      if (inertial && p0_.empty()) p0_.assign(pot.dimension(), 0.0);
      if (inertial && p0_.size() != pot.dimension())
        throw std::invalid_argument("initial momentum has the wrong dimension");
      if (energy_bound_ && pot.energy(x0_) > *energy_bound_)
        throw std::invalid_argument("initial position violates the energy bound U(x0) <= E0");
    } else {
      pi_ = std::make_shared<const EquilibriumDistribution1D>(pot);
    }
  }

  bool inertial() const { return std::holds_alternative<InertialModel>(model_); }

  /// Position for realization r (the fixed x0, or an equilibrium draw with
  /// U <= E0 enforced by redrawing).
  Vector position(std::uint64_t seed, std::uint64_t realization) const {
    if (policy_ == InitialPolicy::fixed) return x0_;
    UniformStream u({seed, realization, StreamRole::initial_condition, 0});
    const PotentialModel& pot = potential_of(model_);
    for (int attempt = 0; attempt < 1000000; ++attempt) {
      Vector x{pi_->sample(u)};
      if (!energy_bound_ || pot.energy(x) <= *energy_bound_) return x;
    }
    throw std::invalid_argument("energy bound E0 excludes essentially all equilibrium mass");
  }

  /// Momentum for realization r: the fixed p0, or N(0, M / beta).
  Vector momentum(std::uint64_t seed, std::uint64_t realization) const {
    const auto& model = std::get<InertialModel>(model_);
    if (policy_ == InitialPolicy::fixed) return p0_;
    GaussianStream g({seed, realization, StreamRole::initial_condition, 1});
    Vector p(model.dimension());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::sqrt(model.mass()[i] / model.beta()) * g.next();
    return p;
  }

  PhaseState phase(std::uint64_t seed, std::uint64_t realization) const {
    return {position(seed, realization), momentum(seed, realization)};
  }

 private:
  AnyModel model_;
  InitialPolicy policy_;
  Vector x0_;
  Vector p0_;
  std::optional<double> energy_bound_;
  std::shared_ptr<const EquilibriumDistribution1D> pi_;
};

}  // namespace metroint
