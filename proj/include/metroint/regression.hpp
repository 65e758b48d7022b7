#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

namespace metroint {

struct OrderFit {
  double slope = 0.0;
  double intercept = 0.0;
  double half_width = 0.0;  // 95% confidence half-width of the slope
};

/// Ordinary least squares of log(error) on log(h); the half-width uses the
/// residual variance and a Student-t quantile with n - 2 degrees of freedom.
inline OrderFit fit_order(std::span<const double> h, std::span<const double> error) {
  if (h.size() != error.size()) throw std::invalid_argument("fit_order: length mismatch");
  if (h.size() < 3) throw std::invalid_argument("fit_order: at least three points required");
  const auto n = static_cast<double>(h.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (!(h[i] > 0.0) || !(error[i] > 0.0))
      throw std::invalid_argument("fit_order: values must be positive");
    mx += std::log(h[i]);
    my += std::log(error[i]);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double dx = std::log(h[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(error[i]) - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit_order: step sizes must not all coincide");
  OrderFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double r = std::log(error[i]) - (fit.intercept + fit.slope * std::log(h[i]));
    rss += r * r;
  }
  const double dof = n - 2.0;
  const double se = std::sqrt(rss / dof / sxx);
  const boost::math::students_t t(dof);
  fit.half_width = boost::math::quantile(boost::math::complement(t, 0.025)) * se;
  return fit;
}

}  // namespace metroint
