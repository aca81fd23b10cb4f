#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "sosrec/errors.hpp"

namespace sosrec {

/// Sorted evaluation times. Grids built by `uniform` start at 0 with equal
/// spacing; `from_times` accepts any strictly increasing nonnegative list.
class TimeGrid {
 public:
  TimeGrid() = default;

  static TimeGrid uniform(double t_end, std::size_t n_points) {
    if (!(t_end > 0.0) || !std::isfinite(t_end)) throw GridError("grid end time must be > 0");
    if (n_points < 2) throw GridError("a uniform grid needs at least two points");
    std::vector<double> t(n_points);
    for (std::size_t i = 0; i < n_points; ++i)
      t[i] = t_end * static_cast<double>(i) / static_cast<double>(n_points - 1);
    t.back() = t_end;
    return TimeGrid(std::move(t));
  }

  /// Uniform grid with spacing `dt` up to (at least) `t_end`.
  static TimeGrid with_step(double t_end, double dt) {
    if (!(dt > 0.0)) throw GridError("grid step must be > 0");
    const auto steps = static_cast<std::size_t>(std::llround(t_end / dt));
    return uniform(dt * static_cast<double>(steps), steps + 1);
  }

  static TimeGrid from_times(std::vector<double> times) {
    if (times.empty()) throw GridError("time grid is empty");
    if (!(times.front() >= 0.0)) throw GridError("grid times must be >= 0");
    for (std::size_t i = 1; i < times.size(); ++i)
      if (!(times[i] > times[i - 1])) throw GridError("grid times must be strictly increasing");
    if (!std::isfinite(times.back())) throw GridError("grid times must be finite");
    return TimeGrid(std::move(times));
  }

  std::size_t size() const { return times_.size(); }
  double operator[](std::size_t i) const { return times_[i]; }
  const std::vector<double>& times() const { return times_; }
  double t_end() const { return times_.empty() ? 0.0 : times_.back(); }
  auto begin() const { return times_.begin(); }
  auto end() const { return times_.end(); }

  bool is_uniform() const {
    if (times_.size() < 2 || times_.front() != 0.0) return false;
    const double h = step();
    for (std::size_t i = 1; i < times_.size(); ++i)
      if (std::abs((times_[i] - times_[i - 1]) - h) > 1e-9 * h) return false;
    return true;
  }

  double step() const {
    return times_.size() < 2 ? 0.0 : (times_.back() - times_.front()) /
                                         static_cast<double>(times_.size() - 1);
  }

  /// Index of the grid point closest to t.
  std::size_t nearest_index(double t) const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < times_.size(); ++i)
      if (std::abs(times_[i] - t) < std::abs(times_[best] - t)) best = i;
    return best;
  }

  bool operator==(const TimeGrid&) const = default;

 private:
  explicit TimeGrid(std::vector<double> t) : times_(std::move(t)) {}
  std::vector<double> times_;
};

}  // namespace sosrec
