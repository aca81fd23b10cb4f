#pragma once

// System-of-systems state space, competing-clocks Monte Carlo, the exact
// enumeration curve for independent systems, and assembly of I' R(t) F.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sosrec/errors.hpp"
#include "sosrec/parallel.hpp"
#include "sosrec/random.hpp"
#include "sosrec/recovery_models.hpp"
#include "sosrec/time_grid.hpp"
#include "sosrec/transition_matrix.hpp"

namespace sosrec {

inline constexpr std::size_t kMaxSystems = 20;

/// Subsets of functional systems, ordered by cardinality and then
/// lexicographically by member index. State 0 is the empty set and the
/// last state is the full set. Systems are 0-based bit positions.
class StateSpace {
 public:
  using Mask = std::uint32_t;

  StateSpace() = default;

  static StateSpace subsets(std::size_t n_systems, std::size_t cap = kMaxSystems) {
    if (n_systems < 1) throw SizeError("state space needs at least one system");
    if (n_systems > std::min(cap, kMaxSystems))
      throw SizeError("n_systems = " + std::to_string(n_systems) + " exceeds the cap of " +
                      std::to_string(std::min(cap, kMaxSystems)));
    StateSpace s;
    s.n_systems_ = n_systems;
    const std::size_t total = std::size_t{1} << n_systems;
    s.masks_.reserve(total);
    s.index_.assign(total, 0);
    for (std::size_t card = 0; card <= n_systems; ++card) {
      std::vector<bool> pick(n_systems, false);
      std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(card), true);
      do {
        Mask m = 0;
        for (std::size_t k = 0; k < n_systems; ++k)
          if (pick[k]) m |= Mask{1} << k;
        s.index_[m] = s.masks_.size();
        s.masks_.push_back(m);
      } while (std::prev_permutation(pick.begin(), pick.end()));
    }
    return s;
  }

  std::size_t n_systems() const { return n_systems_; }
  std::size_t size() const { return masks_.size(); }
  Mask mask(std::size_t state) const { return masks_[state]; }
  std::size_t index_of(Mask m) const { return index_[m]; }
  std::size_t cardinality(std::size_t state) const {
    return static_cast<std::size_t>(std::popcount(masks_[state]));
  }

  std::vector<std::size_t> members(std::size_t state) const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < n_systems_; ++k)
      if (masks_[state] & (Mask{1} << k)) out.push_back(k);
    return out;
  }

 private:
  std::size_t n_systems_ = 0;
  std::vector<Mask> masks_;
  std::vector<std::size_t> index_;
};

inline StateSpace build_state_space(std::size_t n_systems) { return StateSpace::subsets(n_systems); }

/// Functionality level per state.
struct FunctionalityVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }

  void validate(std::size_t n_states) const {
    if (values.size() != n_states)
      throw ShapeError("functionality vector has " + std::to_string(values.size()) +
                       " entries for " + std::to_string(n_states) + " states");
    for (double v : values)
      if (!(v >= 0.0 && v <= 1.0)) throw DomainError("functionality levels must lie in [0, 1]");
  }
};

/// F_i = |subset_i| / n_systems: every system carries the same weight.
inline FunctionalityVector build_equal_impact_F(const StateSpace& space) {
  FunctionalityVector F;
  F.values.reserve(space.size());
  const auto n = static_cast<double>(space.n_systems());
  for (std::size_t i = 0; i < space.size(); ++i)
    F.values.push_back(static_cast<double>(space.cardinality(i)) / n);
  return F;
}

struct InitialStateVector {
  std::vector<double> probs;

  static InitialStateVector first_state(std::size_t n_states) {
    InitialStateVector I;
    I.probs.assign(n_states, 0.0);
    I.probs.at(0) = 1.0;
    return I;
  }

  std::size_t size() const { return probs.size(); }

  void validate(std::size_t n_states) const {
    if (probs.size() != n_states) throw ShapeError("initial state vector length mismatch");
    double sum = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0)) throw DomainError("initial state probabilities must be >= 0");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw DomainError("initial state probabilities must sum to 1");
  }

  bool is_first_state() const {
    if (probs.empty() || probs[0] != 1.0) return false;
    return std::all_of(probs.begin() + 1, probs.end(), [](double p) { return p == 0.0; });
  }
};

/// Expected SoS functionality on a grid.
struct RecoveryCurve {
  TimeGrid grid;
  std::vector<double> values;
  std::optional<std::vector<double>> stderr;
};

/// One discrete recovery path: the state after each event.
struct RealizationTrajectory {
  std::size_t initial_state = 0;
  std::vector<double> event_times;
  std::vector<std::size_t> states;

  /// Right-continuous: the state entered at an event time is occupied at it.
  std::size_t state_at(double t) const {
    const auto it = std::upper_bound(event_times.begin(), event_times.end(), t);
    const auto k = static_cast<std::size_t>(it - event_times.begin());
    return k == 0 ? initial_state : states[k - 1];
  }
};

/// Trajectory from per-system recovery times: systems join the functional
/// set in ascending time order, ties broken by ascending system index.
inline RealizationTrajectory trajectory_from_recovery_times(const std::vector<double>& times,
                                                            const StateSpace& space) {
  if (times.size() != space.n_systems()) throw ShapeError("one recovery time per system required");
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  RealizationTrajectory traj;
  traj.initial_state = 0;
  StateSpace::Mask m = 0;
  for (std::size_t k : order) {
    m |= StateSpace::Mask{1} << k;
    // Tied times stay as separate zero-length events so the tie order is
    // observable; state_at() resolves to the last of them.
    traj.event_times.push_back(times[k]);
    traj.states.push_back(space.index_of(m));
  }
  return traj;
}

/// Draws one recovery time per system (in system order) and orders them.
inline RealizationTrajectory simulate_realization_clocks(const RecoveryFunctionSet& set,
                                                         const StateSpace& space, Rng& rng) {
  if (set.n_systems() != space.n_systems()) throw ShapeError("function set / state space mismatch");
  std::vector<double> times;
  times.reserve(set.n_systems());
  for (const auto& f : set) times.push_back(sample_recovery_time(f, rng));
  return trajectory_from_recovery_times(times, space);
}

inline std::vector<double> functionality_of_trajectory(const RealizationTrajectory& traj,
                                                       const FunctionalityVector& F,
                                                       const TimeGrid& grid) {
  std::vector<double> out;
  out.reserve(grid.size());
  for (double t : grid) out.push_back(F.values.at(traj.state_at(t)));
  return out;
}

/// Realizations are accumulated in fixed blocks so thread count never
/// changes the floating-point summation order.
inline constexpr std::size_t kMcBlockSize = 1024;

/// Mean SoS functionality over independent competing-clocks realizations.
/// Realization i draws from make_child_rng(seed, i).
inline RecoveryCurve estimate_recovery_curve_mc(const RecoveryFunctionSet& set,
                                                const StateSpace& space,
                                                const FunctionalityVector& F,
                                                const InitialStateVector& I, const TimeGrid& grid,
                                                std::size_t n_realizations, std::uint64_t seed,
                                                unsigned threads = 1) {
  if (n_realizations < 1) throw ConfigError("n_realizations must be >= 1");
  if (set.n_systems() != space.n_systems()) throw ShapeError("function set / state space mismatch");
  F.validate(space.size());
  I.validate(space.size());
  if (!I.is_first_state())
    throw UnsupportedModelError(
        "competing-clocks simulation starts every realization in the empty state; "
        "initial vectors other than e1 are not supported");

  const std::size_t n_points = grid.size();
  const std::size_t n_blocks = (n_realizations + kMcBlockSize - 1) / kMcBlockSize;
  std::vector<std::vector<double>> block_sum(n_blocks, std::vector<double>(n_points, 0.0));
  std::vector<std::vector<double>> block_sq(n_blocks, std::vector<double>(n_points, 0.0));

  parallel_for(n_blocks, threads, [&](std::size_t b) {
    auto& sum = block_sum[b];
    auto& sq = block_sq[b];
    const std::size_t lo = b * kMcBlockSize;
    const std::size_t hi = std::min(n_realizations, lo + kMcBlockSize);
    for (std::size_t r = lo; r < hi; ++r) {
      Rng rng = make_child_rng(seed, r);
      const auto traj = simulate_realization_clocks(set, space, rng);
      std::size_t ev = 0;
      std::size_t state = traj.initial_state;
      for (std::size_t g = 0; g < n_points; ++g) {
        while (ev < traj.event_times.size() && traj.event_times[ev] <= grid[g]) state = traj.states[ev++];
        const double v = F.values[state];
        sum[g] += v;
        sq[g] += v * v;
      }
    }
  });

  RecoveryCurve curve{grid, std::vector<double>(n_points, 0.0), std::vector<double>(n_points, 0.0)};
  const auto n = static_cast<double>(n_realizations);
  for (std::size_t g = 0; g < n_points; ++g) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t b = 0; b < n_blocks; ++b) {
      s += block_sum[b][g];
      s2 += block_sq[b][g];
    }
    const double mean = s / n;
    curve.values[g] = mean;
    if (n_realizations > 1) {
      const double var = std::max(0.0, (s2 - s * mean) / (n - 1.0));
      (*curve.stderr)[g] = std::sqrt(var / n);
    }
  }
  return curve;
}

/// Closed-form curve for independent systems: every subset A has
/// probability prod_{k in A} phi_k(t) * prod_{k not in A} (1 - phi_k(t)).
inline RecoveryCurve exact_recovery_curve_independent(const RecoveryFunctionSet& set,
                                                      const StateSpace& space,
                                                      const FunctionalityVector& F,
                                                      const TimeGrid& grid) {
  if (space.n_systems() > kMaxSystems) throw SizeError("too many systems for enumeration");
  if (set.n_systems() != space.n_systems()) throw ShapeError("function set / state space mismatch");
  F.validate(space.size());
  const std::size_t n = space.n_systems();
  RecoveryCurve curve{grid, std::vector<double>(grid.size(), 0.0), std::vector<double>(grid.size(), 0.0)};
  std::vector<double> phi(n);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    for (std::size_t k = 0; k < n; ++k) phi[k] = set[k].cdf(grid[g]);
    double total = 0.0;
    for (std::size_t i = 0; i < space.size(); ++i) {
      const auto m = space.mask(i);
      double p = 1.0;
      for (std::size_t k = 0; k < n; ++k) p *= (m & (StateSpace::Mask{1} << k)) ? phi[k] : 1.0 - phi[k];
      total += p * F.values[i];
    }
    curve.values[g] = total;
  }
  return curve;
}

/// F(t) = I' R(t) F at every slice of R.
inline RecoveryCurve assemble_functionality(const InitialStateVector& I,
                                            const TransitionProbabilityMatrix& R,
                                            const FunctionalityVector& F) {
  const std::size_t n = R.n_states();
  if (I.size() != n || F.size() != n)
    throw ShapeError("I, R(t) and F dimensions disagree (" + std::to_string(I.size()) + ", " +
                     std::to_string(n) + ", " + std::to_string(F.size()) + ")");
  const Eigen::Map<const Eigen::VectorXd> iv(I.probs.data(), static_cast<Eigen::Index>(n));
  const Eigen::Map<const Eigen::VectorXd> fv(F.values.data(), static_cast<Eigen::Index>(n));
  RecoveryCurve curve{R.grid, {}, std::nullopt};
  curve.values.reserve(R.slices.size());
  for (const auto& slice : R.slices) curve.values.push_back(iv.dot(slice * fv));
  return curve;
}

}  // namespace sosrec
