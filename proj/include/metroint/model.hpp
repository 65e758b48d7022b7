#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace metroint {

using Vector = std::vector<double>;

/// A potential produced a non-finite value, or a model was built with invalid
/// parameters.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

inline double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

/// Potential energy U on R^n together with its gradient and the inverse
/// temperature of the target density exp(-beta U).
class PotentialModel {
 public:
  using EnergyFn = std::function<double(std::span<const double>)>;
  using GradientFn = std::function<void(std::span<const double>, std::span<double>)>;

  PotentialModel(std::size_t dimension, double beta, std::string kind,
                 EnergyFn energy, GradientFn gradient)
      : dimension_(dimension),
        beta_(beta),
        kind_(std::move(kind)),
        energy_(std::move(energy)),
        gradient_(std::move(gradient)) {
    if (dimension_ == 0) throw ModelError("potential dimension must be positive");
    if (!(beta_ > 0.0) || !std::isfinite(beta_))
      throw ModelError("inverse temperature beta must be positive");
  }

  std::size_t dimension() const { return dimension_; }
  double beta() const { return beta_; }
  const std::string& kind() const { return kind_; }

  /// U(x). Throws ModelError on a non-finite value.
  double energy(std::span<const double> x) const {
    const double u = energy_(x);
    if (!std::isfinite(u)) throw ModelError("potential energy is not finite");
    return u;
  }

  void gradient(std::span<const double> x, std::span<double> out) const {
    gradient_(x, out);
  }

  Vector gradient(std::span<const double> x) const {
    Vector g(dimension_);
    gradient_(x, g);
    return g;
  }

  PotentialModel with_beta(double beta) const {
    return PotentialModel(dimension_, beta, kind_, energy_, gradient_);
  }

 private:
  std::size_t dimension_;
  double beta_;
  std::string kind_;
  EnergyFn energy_;
  GradientFn gradient_;
};

/// U(x) = sum_i sum_k c_k x_i^k, applied coordinate-wise.
inline PotentialModel make_polynomial_model(std::vector<double> coefficients,
                                            double beta, std::size_t dimension = 1) {
  if (coefficients.empty()) coefficients.push_back(0.0);
  for (double c : coefficients)
    if (!std::isfinite(c)) throw ModelError("polynomial coefficients must be finite");
  auto energy = [c = coefficients](std::span<const double> x) {
    double total = 0.0;
    for (double xi : x) {
      double acc = 0.0;
      for (auto k = c.size(); k-- > 0;) acc = acc * xi + c[k];
      total += acc;
    }
    return total;
  };
  auto gradient = [c = coefficients](std::span<const double> x, std::span<double> g) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      double acc = 0.0;
      for (auto k = c.size(); k-- > 1;) acc = acc * x[i] + static_cast<double>(k) * c[k];
      g[i] = acc;
    }
  };
  return PotentialModel(dimension, beta, "polynomial", std::move(energy), std::move(gradient));
}

/// U(x) = sum_i x_i^4 / 4.
inline PotentialModel make_quartic_model(double beta, std::size_t dimension = 1) {
  if (!(beta > 0.0)) throw ModelError("inverse temperature beta must be positive");
  auto energy = [](std::span<const double> x) {
    double u = 0.0;
    for (double xi : x) {
      const double x2 = xi * xi;
      u += 0.25 * x2 * x2;
    }
    return u;
  };
  auto gradient = [](std::span<const double> x, std::span<double> g) {
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] * x[i] * x[i];
  };
  return PotentialModel(dimension, beta, "quartic", energy, gradient);
}

/// U(x) = |x|^2 / 2.
inline PotentialModel make_quadratic_model(double beta, std::size_t dimension = 1) {
  if (!(beta > 0.0)) throw ModelError("inverse temperature beta must be positive");
  auto energy = [](std::span<const double> x) { return 0.5 * squared_norm(x); };
  auto gradient = [](std::span<const double> x, std::span<double> g) {
    std::copy(x.begin(), x.end(), g.begin());
  };
  return PotentialModel(dimension, beta, "quadratic", energy, gradient);
}

inline PotentialModel make_zero_model(double beta, std::size_t dimension = 1) {
  if (!(beta > 0.0)) throw ModelError("inverse temperature beta must be positive");
  auto energy = [](std::span<const double>) { return 0.0; };
  auto gradient = [](std::span<const double>, std::span<double> g) {
    std::fill(g.begin(), g.end(), 0.0);
  };
  return PotentialModel(dimension, beta, "zero", energy, gradient);
}

/// Central-difference approximation of grad U at x.
inline Vector finite_difference_gradient(const PotentialModel& model,
                                         std::span<const double> x, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  Vector probe(x.begin(), x.end());
  Vector g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = probe[i];
    probe[i] = xi + eps;
    const double up = model.energy(probe);
    probe[i] = xi - eps;
    const double down = model.energy(probe);
    probe[i] = xi;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

/// Potential plus friction and a diagonal mass matrix for inertial Langevin
/// dynamics with Hamiltonian H(q, p) = p^T M^{-1} p / 2 + U(q).
class InertialModel {
 public:
  InertialModel(PotentialModel base, double gamma, Vector mass)
      : base_(std::move(base)), gamma_(gamma), mass_(std::move(mass)) {
    if (!(gamma_ > 0.0) || !std::isfinite(gamma_))
      throw ModelError("friction gamma must be positive");
    if (mass_.size() == 1 && base_.dimension() > 1) mass_.assign(base_.dimension(), mass_[0]);
    if (mass_.size() != base_.dimension())
      throw ModelError("mass vector length must match the potential dimension");
    for (double m : mass_)
      if (!(m > 0.0) || !std::isfinite(m)) throw ModelError("mass entries must be positive");
  }

  const PotentialModel& potential() const { return base_; }
  std::size_t dimension() const { return base_.dimension(); }
  double beta() const { return base_.beta(); }
  double gamma() const { return gamma_; }
  const Vector& mass() const { return mass_; }

  double kinetic_energy(std::span<const double> p) const {
    double k = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) k += p[i] * p[i] / mass_[i];
    return 0.5 * k;
  }

  double hamiltonian(std::span<const double> q, std::span<const double> p) const {
    return kinetic_energy(p) + base_.energy(q);
  }

 private:
  PotentialModel base_;
  double gamma_;
  Vector mass_;
};

struct OverdampedState {
  Vector x;
};

struct PhaseState {
  Vector q;
  Vector p;
};

/// Momentum flip (q, p) -> (q, -p).
inline PhaseState flip(PhaseState s) {
  for (double& v : s.p) v = -v;
  return s;
}

/// Result of one (possibly Metropolis-adjusted) step. For unadjusted methods
/// the proposal is always accepted with probability one.
template <class State>
struct StepOutcome {
  State state;
  State proposal;
  double acceptance = 1.0;
  bool accepted = true;
};

enum class Method { ula, mala, malta, gla, magla };

inline bool is_inertial(Method m) { return m == Method::gla || m == Method::magla; }
inline bool is_metropolized(Method m) { return m != Method::ula && m != Method::gla; }

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::ula: return "ULA";
    case Method::mala: return "MALA";
    case Method::malta: return "MALTA";
    case Method::gla: return "GLA";
    case Method::magla: return "MAGLA";
  }
  return "?";
}

inline Method parse_method(std::string_view name) {
  std::string upper(name);
  for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (Method m : {Method::ula, Method::mala, Method::malta, Method::gla, Method::magla})
    if (upper == to_string(m)) return m;
  throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

/// A chain left the region |x|_inf <= guard (or produced non-finite values).
struct BlowUp {
  std::size_t step = 0;  // index of the step that produced the offending state
  Vector state;
};

}  // namespace metroint
