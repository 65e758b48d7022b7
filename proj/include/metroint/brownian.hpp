#pragma once

// Fine-resolution Wiener increments shared by an integrator and its
// reference trajectory.
//
// Coarse increments are pairwise sums over aligned blocks of fine rows. For
// power-of-two block lengths this makes coarsening exactly associative in
// floating point: the increment over a step of size 2h is bit-for-bit the sum
// of the two increments over the steps of size h it contains.

#include <bit>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "metroint/model.hpp"
#include "metroint/rng.hpp"

namespace metroint {

/// Number of steps of size h in [0, T]. Throws if T/h is not an integer to
/// 1e-12 relative tolerance.
inline std::size_t grid_steps(double horizon, double h) {
  if (!(horizon > 0.0) || !(h > 0.0)) throw std::invalid_argument("horizon and step must be positive");
  const double ratio = horizon / h;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-12 * rounded)
    throw std::invalid_argument("step " + std::to_string(h) + " does not divide horizon " +
                                std::to_string(horizon));
  return static_cast<std::size_t>(rounded);
}

class BrownianIncrementGrid {
 public:
  BrownianIncrementGrid(double horizon, double fine_step, std::size_t dimension,
                        std::vector<double> increments)
      : horizon_(horizon),
        fine_step_(fine_step),
        dimension_(dimension),
        rows_(grid_steps(horizon, fine_step)),
        data_(std::move(increments)) {
    if (dimension_ == 0) throw std::invalid_argument("grid dimension must be positive");
    if (data_.size() != rows_ * dimension_)
      throw std::invalid_argument("increment storage does not match grid shape");
  }

  double horizon() const { return horizon_; }
  double fine_step() const { return fine_step_; }
  std::size_t dimension() const { return dimension_; }
  std::size_t rows() const { return rows_; }

  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * dimension_, dimension_};
  }
  std::span<const double> data() const { return data_; }

 private:
  double horizon_;
  double fine_step_;
  std::size_t dimension_;
  std::size_t rows_;
  std::vector<double> data_;
};

/// Rows i.i.d. N(0, h_fine I), deterministic in `rng` (role forced to brownian).
inline BrownianIncrementGrid generate_brownian_grid(double horizon, double fine_step,
                                                    std::size_t dimension,
                                                    const RngStreamSpec& rng) {
  const std::size_t rows = grid_steps(horizon, fine_step);
  GaussianStream gauss({rng.seed, rng.stream, StreamRole::brownian, rng.lane});
  std::vector<double> data(rows * dimension);
  const double scale = std::sqrt(fine_step);
  for (double& v : data) v = scale * gauss.next();
  return BrownianIncrementGrid(horizon, fine_step, dimension, std::move(data));
}

namespace detail {

/// Pairwise sum of rows [begin, begin + count) for component c. Splits at
/// the largest power of two below count, so aligned power-of-two blocks nest.
inline double pairwise_row_sum(const BrownianIncrementGrid& grid, std::size_t begin,
                               std::size_t count, std::size_t c) {
  if (count == 1) return grid.row(begin)[c];
  const std::size_t half = std::bit_floor(count - 1);
  return pairwise_row_sum(grid, begin, half, c) +
         pairwise_row_sum(grid, begin + half, count - half, c);
}

inline std::size_t rows_per_step(const BrownianIncrementGrid& grid, double h) {
  const double ratio = h / grid.fine_step();
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-12 * rounded)
    throw std::invalid_argument("step is not an integer multiple of the fine step");
  return static_cast<std::size_t>(rounded);
}

/// sqrt(2 gamma / beta) sum_{i in [first, last)} exp(-gamma (last - i) h_f / m) dW_i.
inline void ou_integral_rows(const BrownianIncrementGrid& grid, const InertialModel& model,
                             std::size_t first, std::size_t last, std::span<double> out) {
  const double prefactor = std::sqrt(2.0 * model.gamma() / model.beta());
  for (std::size_t c = 0; c < out.size(); ++c) {
    const double rate = model.gamma() * grid.fine_step() / model.mass()[c];
    double acc = 0.0;
    for (std::size_t i = first; i < last; ++i)
      acc += std::exp(-rate * static_cast<double>(last - i)) * grid.row(i)[c];
    out[c] = prefactor * acc;
  }
}

}  // namespace detail

/// W((k+1)h) - W(kh) from the fine rows spanning that step.
inline Vector coarse_increment(const BrownianIncrementGrid& grid, double h, std::size_t k) {
  const std::size_t r = detail::rows_per_step(grid, h);
  if ((k + 1) * r > grid.rows()) throw std::out_of_range("coarse step index out of range");
  Vector out(grid.dimension());
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = detail::pairwise_row_sum(grid, k * r, r, c);
  return out;
}

/// The grid of increments at step factor * h_fine. Row k equals
/// coarse_increment(grid, factor * h_fine, k) bit for bit.
inline BrownianIncrementGrid coarsen(const BrownianIncrementGrid& grid, std::size_t factor) {
  if (factor == 0 || grid.rows() % factor != 0)
    throw std::invalid_argument("coarsening factor must divide the number of rows");
  if (factor == 1) return grid;
  const std::size_t n = grid.dimension();
  const std::size_t rows = grid.rows() / factor;
  std::vector<double> data(rows * n);
  if (std::has_single_bit(factor)) {
    // Repeated halving is the pairwise tree evaluated level by level.
    std::vector<double> level(grid.data().begin(), grid.data().end());
    for (std::size_t len = grid.rows(); len > rows; len /= 2) {
      for (std::size_t i = 0; i < len / 2; ++i)
        for (std::size_t c = 0; c < n; ++c)
          level[i * n + c] = level[2 * i * n + c] + level[(2 * i + 1) * n + c];
    }
    data.assign(level.begin(), level.begin() + static_cast<std::ptrdiff_t>(rows * n));
  } else {
    for (std::size_t k = 0; k < rows; ++k)
      for (std::size_t c = 0; c < n; ++c)
        data[k * n + c] = detail::pairwise_row_sum(grid, k * factor, factor, c);
  }
  return BrownianIncrementGrid(grid.horizon(), grid.fine_step() * static_cast<double>(factor), n,
                               std::move(data));
}

/// W(T) - W(0).
inline Vector terminal_value(const BrownianIncrementGrid& grid) {
  return coarse_increment(grid, grid.horizon(), 0);
}

/// sqrt(2 gamma / beta) sum_i exp(-gamma (b - s_i) / m) dW_i over the fine
/// increments in [a, b), s_i the left end of increment i. The reference and
/// coarse inertial integrators both build their OU integrals this way.
inline Vector coarse_ou_integral(const BrownianIncrementGrid& grid, const InertialModel& model,
                                 double a, double b) {
  const double hf = grid.fine_step();
  const double ia = std::round(a / hf);
  const double ib = std::round(b / hf);
  if (std::abs(a / hf - ia) > 1e-9 || std::abs(b / hf - ib) > 1e-9 || ia < 0.0 || ib <= ia ||
      ib > static_cast<double>(grid.rows()))
    throw std::invalid_argument("OU integral endpoints must lie on the fine grid");
  Vector out(grid.dimension());
  detail::ou_integral_rows(grid, model, static_cast<std::size_t>(ia), static_cast<std::size_t>(ib),
                           out);
  return out;
}

}  // namespace metroint
