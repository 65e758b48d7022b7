#pragma once

// One-dimensional equilibrium density pi(x) = exp(-beta U(x)) / Z, its CDF
// by quadrature, inverse-transform sampling, and Kolmogorov-Smirnov distances.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "metroint/model.hpp"
#include "metroint/rng.hpp"

namespace metroint {

class EquilibriumDistribution1D {
 public:
  /// Truncates to [lower, upper] with less than ~1e-12 of the mass outside,
  /// then tabulates the CDF on `panels` equal panels by adaptive
  /// Gauss-Kronrod quadrature. Throws ModelError if exp(-beta U) is not
  /// integrable.
  explicit EquilibriumDistribution1D(PotentialModel model, std::size_t panels = 2048)
      : model_(std::move(model)) {
    if (model_.dimension() != 1)
      throw std::invalid_argument("equilibrium sampler requires a one-dimensional potential");
    if (panels == 0) throw std::invalid_argument("panel count must be positive");
    shift_ = scan_minimum();
    upper_ = tail_cutoff(+1.0);
    lower_ = -tail_cutoff(-1.0);

    edges_.resize(panels + 1);
    cumulative_.assign(panels + 1, 0.0);
    const double width = (upper_ - lower_) / static_cast<double>(panels);
    for (std::size_t i = 0; i <= panels; ++i) edges_[i] = lower_ + width * static_cast<double>(i);
    edges_.back() = upper_;
    for (std::size_t i = 0; i < panels; ++i)
      cumulative_[i + 1] = cumulative_[i] + adaptive(edges_[i], edges_[i + 1]);
    total_ = cumulative_.back();
    if (!(total_ > 0.0) || !std::isfinite(total_))
      throw ModelError("equilibrium density has no finite positive mass");
  }

  double lower() const { return lower_; }
  double upper() const { return upper_; }

  /// log Z with Z = int exp(-beta U).
  double log_normalization() const { return std::log(total_) - model_.beta() * shift_; }

  double density(double x) const { return unnormalized(x) / total_; }

  double cdf(double x) const {
    if (x <= lower_) return 0.0;
    if (x >= upper_) return 1.0;
    const std::size_t i = panel_of(x);
    return std::min(1.0, (cumulative_[i] + partial(edges_[i], x)) / total_);
  }

  /// Inverse CDF by panel lookup followed by bisection to 1e-12 in
  /// probability.
  double inverse_cdf(double u) const {
    if (!(u >= 0.0 && u <= 1.0)) throw std::invalid_argument("probability must lie in [0, 1]");
    const double target = u * total_;
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
    std::size_t i = it == cumulative_.begin() ? 0 : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
    i = std::min(i, edges_.size() - 2);
    double a = edges_[i];
    double b = edges_[i + 1];
    const double base = cumulative_[i];
    for (int iter = 0; iter < 200; ++iter) {
      const double mid = 0.5 * (a + b);
      const double f = (base + partial(edges_[i], mid)) / total_;
      if (std::abs(f - u) <= 1e-12 || mid == a || mid == b) return mid;
      (f < u ? a : b) = mid;
    }
    return 0.5 * (a + b);
  }

  double sample(UniformStream& rng) const { return inverse_cdf(rng.next()); }

  /// E_pi[f] by panel-wise adaptive quadrature.
  template <class F>
  double expectation(F&& f) const {
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < edges_.size(); ++i) {
      acc += boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
          [&](double x) { return f(x) * unnormalized(x); }, edges_[i], edges_[i + 1], 4, 1e-12);
    }
    return acc / total_;
  }

 private:
  double unnormalized(double x) const {
    const double xs[1] = {x};
    return std::exp(-model_.beta() * (model_.energy(xs) - shift_));
  }

  double adaptive(double a, double b) const {
    return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        [this](double x) { return unnormalized(x); }, a, b, 10, 1e-12);
  }

  double partial(double a, double x) const {
    if (x <= a) return 0.0;
    return boost::math::quadrature::gauss<double, 15>::integrate(
        [this](double t) { return unnormalized(t); }, a, x);
  }

  std::size_t panel_of(double x) const {
    auto it = std::upper_bound(edges_.begin(), edges_.end(), x);
    const auto i = static_cast<std::size_t>(it - edges_.begin());
    return std::min(i == 0 ? 0 : i - 1, edges_.size() - 2);
  }

  double scan_minimum() const {
    double best = std::numeric_limits<double>::infinity();
    for (int i = -4096; i <= 4096; ++i) {
      const double xs[1] = {64.0 * i / 4096.0};
      best = std::min(best, model_.energy(xs));
    }
    return best;
  }

  /// Smallest R = 2^k with int_R^{2R} pi < 1e-13 int_{-R}^{R} pi on the
  /// given side (sign = +1 right, -1 left).
  double tail_cutoff(double sign) const {
    for (double r = 1.0; r <= 1e6; r *= 2.0) {
      const double core = adaptive(-r, r);
      const double tail = sign > 0 ? adaptive(r, 2.0 * r) : adaptive(-2.0 * r, -r);
      const bool decaying = unnormalized(sign * 2.0 * r) <= unnormalized(sign * r);
      if (core > 0.0 && decaying && tail < 1e-13 * core) return r;
    }
    throw ModelError("exp(-beta U) is not integrable: quadrature of the tail does not converge");
  }

  PotentialModel model_;
  double shift_ = 0.0;
  double lower_ = 0.0;
  double upper_ = 0.0;
  double total_ = 0.0;
  std::vector<double> edges_;
  std::vector<double> cumulative_;
};

/// One draw from exp(-beta U) / Z by inverse transform sampling.
inline double equilibrium_sample_1d(const EquilibriumDistribution1D& pi, UniformStream& rng) {
  return pi.sample(rng);
}

inline double normal_cdf(double x, double variance = 1.0) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0 * variance));
}

/// sup_x |F_n(x) - F(x)| for the empirical CDF F_n of `samples`.
template <class Cdf>
double ks_distance(std::vector<double> samples, Cdf&& cdf) {
  if (samples.empty()) throw std::invalid_argument("ks_distance: no samples");
  std::sort(samples.begin(), samples.end());
  const auto n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    const auto k = static_cast<double>(i);
    d = std::max({d, (k + 1.0) / n - f, f - k / n});
  }
  return d;
}

}  // namespace metroint
