#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "sosrec/time_grid.hpp"

namespace sosrec {

/// R(t) on a grid: entry (i, j) of slice n is the probability of occupying
/// state j at grid time n given a start in state i.
struct TransitionProbabilityMatrix {
  TimeGrid grid;
  std::vector<Eigen::MatrixXd> slices;
  /// Monte Carlo standard errors per entry, when estimated by simulation.
  std::optional<std::vector<Eigen::MatrixXd>> stderr;
  /// Largest |row sum - 1| before renormalization.
  double max_row_sum_deviation = 0.0;
  /// Largest distance an entry had to be moved to land in [0, 1].
  double max_clamp_violation = 0.0;

  std::size_t n_states() const { return slices.empty() ? 0 : static_cast<std::size_t>(slices.front().rows()); }
  const Eigen::MatrixXd& at(std::size_t n) const { return slices[n]; }
};

}  // namespace sosrec
