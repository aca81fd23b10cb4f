#pragma once

// Markov-renewal machinery: semi-Markov kernels, the waiting matrix, a
// time-marching Volterra solver for R(t) and a Monte Carlo estimator of R(t).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <json.hpp>

#include "sosrec/errors.hpp"
#include "sosrec/io.hpp"
#include "sosrec/parallel.hpp"
#include "sosrec/random.hpp"
#include "sosrec/recovery_models.hpp"
#include "sosrec/sos_core.hpp"
#include "sosrec/time_grid.hpp"
#include "sosrec/transition_matrix.hpp"

namespace sosrec {

namespace detail {

/// Sub-distribution P(T_target <= t, T_target < T_j for every competitor j)
/// for independent clocks, tabulated by 15-point Kronrod on a fixed
/// partition of [0, horizon] beyond which less than 1e-13 mass remains.
class CompetingTable {
 public:
  static constexpr std::size_t kIntervals = 2048;

  CompetingTable(RecoveryFunction target, std::vector<RecoveryFunction> competitors)
      : target_(std::move(target)), competitors_(std::move(competitors)) {
    horizon_ = target_.time_to_reach(1.0 - 1e-13);
    for (const auto& c : competitors_) horizon_ = std::min(horizon_, c.time_to_reach(1.0 - 1e-13));
    width_ = horizon_ / static_cast<double>(kIntervals);
    cumulative_.resize(kIntervals + 1, 0.0);
    for (std::size_t i = 0; i < kIntervals; ++i)
      cumulative_[i + 1] = cumulative_[i] + integrate(knot(i), knot(i + 1));
  }

  double density(double t) const {
    double g = target_.density(t);
    if (g == 0.0) return 0.0;
    for (const auto& c : competitors_) g *= 1.0 - c.cdf(t);
    return g;
  }

  double cdf(double t) const {
    if (t >= horizon_) return cumulative_.back();
    const auto i = std::min(kIntervals - 1, static_cast<std::size_t>(t / width_));
    return cumulative_[i] + integrate(knot(i), t);
  }

  double mass() const { return cumulative_.back(); }

  /// Smallest t with cdf(t) = level, level in [0, mass).
  double invert(double level) const {
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), level);
    if (it == cumulative_.end()) return horizon_;
    const auto i = static_cast<std::size_t>(it - cumulative_.begin()) - 1;
    double lo = knot(i), hi = knot(i + 1);
    const double need = level - cumulative_[i];
    double x = 0.5 * (lo + hi);
    for (int iter = 0; iter < 100 && hi - lo > 1e-14 * std::max(1.0, hi); ++iter) {
      const double err = integrate(knot(i), x) - need;
      if (err > 0.0) hi = x; else lo = x;
      const double g = density(x);
      double next = g > 0.0 ? x - err / g : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - x) <= 1e-15 * std::max(1.0, x)) { x = next; break; }
      x = next;
    }
    return x;
  }

 private:
  double knot(std::size_t i) const {
    return i == kIntervals ? horizon_ : width_ * static_cast<double>(i);
  }

  double integrate(double a, double b) const {
    if (!(b > a)) return 0.0;
    auto g = [this](double s) { return density(s); };
    // Cells touching 0 may carry an integrable singularity (weibull, k < 1).
    if (a == 0.0) {
      static boost::math::quadrature::tanh_sinh<double> endpoint_rule;
      return endpoint_rule.integrate(g, a, b, 1e-12);
    }
    return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(g, a, b, 0);
  }

  RecoveryFunction target_;
  std::vector<RecoveryFunction> competitors_;
  double horizon_ = 0.0;
  double width_ = 0.0;
  std::vector<double> cumulative_;
};

}  // namespace detail

/// One kernel entry Phi_ij: a nondecreasing sub-distribution of holding
/// time with Phi_ij(0) = 0 and total mass Phi_ij(inf) = p_ij <= 1.
class SubDistribution {
 public:
  SubDistribution() = default;

  static SubDistribution zero() { return SubDistribution(); }

  /// p * phi(t) for a recovery function phi.
  static SubDistribution scaled(double mass, RecoveryFunction f) {
    if (!(mass >= 0.0 && mass <= 1.0)) throw DomainError("kernel mass must lie in [0, 1]");
    SubDistribution s;
    s.kind_ = Kind::scaled;
    s.mass_ = mass;
    s.function_ = std::make_shared<const RecoveryFunction>(std::move(f));
    if (mass == 0.0) s.kind_ = Kind::zero;
    return s;
  }

  /// Probability that `target` fires first among independent clocks, by time t.
  static SubDistribution competing(RecoveryFunction target, std::vector<RecoveryFunction> competitors) {
    if (competitors.empty()) return scaled(1.0, std::move(target));
    SubDistribution s;
    s.kind_ = Kind::competing;
    s.table_ = std::make_shared<const detail::CompetingTable>(std::move(target), std::move(competitors));
    s.mass_ = s.table_->mass();
    return s;
  }

  bool is_zero() const { return kind_ == Kind::zero; }
  double mass() const { return mass_; }

  double cdf(double t) const {
    switch (kind_) {
      case Kind::zero: return 0.0;
      case Kind::scaled: return mass_ * function_->cdf(t);
      case Kind::competing: return table_->cdf(t);
    }
    return 0.0;
  }

  double density(double t) const {
    switch (kind_) {
      case Kind::zero: return 0.0;
      case Kind::scaled: return mass_ * function_->density(t);
      case Kind::competing: return table_->density(t);
    }
    return 0.0;
  }

  /// Quantile of the conditional holding-time law cdf(t) / mass at u in [0, 1).
  double sample_holding_time(double u) const {
    switch (kind_) {
      case Kind::zero: break;
      case Kind::scaled: return function_->quantile(u);
      case Kind::competing: return table_->invert(u * mass_);
    }
    throw DomainError("cannot sample a holding time from a zero kernel entry");
  }

  /// The underlying recovery function of a scaled entry (null otherwise).
  const RecoveryFunction* function() const { return kind_ == Kind::scaled ? function_.get() : nullptr; }

 private:
  enum class Kind { zero, scaled, competing };
  Kind kind_ = Kind::zero;
  double mass_ = 0.0;
  std::shared_ptr<const RecoveryFunction> function_;
  std::shared_ptr<const detail::CompetingTable> table_;
};

/// Semi-Markov kernel Phi(t), N x N sub-distributions.
class KernelMatrix {
 public:
  KernelMatrix() = default;
  explicit KernelMatrix(std::size_t n_states) : n_(n_states), entries_(n_states * n_states) {
    if (n_states == 0) throw ShapeError("kernel needs at least one state");
  }

  std::size_t n_states() const { return n_; }
  const SubDistribution& operator()(std::size_t i, std::size_t j) const { return entries_[i * n_ + j]; }
  void set(std::size_t i, std::size_t j, SubDistribution s) {
    if (i >= n_ || j >= n_) throw ShapeError("kernel index out of range");
    entries_[i * n_ + j] = std::move(s);
  }

  double row_mass(std::size_t i) const {
    double m = 0.0;
    for (std::size_t j = 0; j < n_; ++j) m += (*this)(i, j).mass();
    return m;
  }

  bool is_absorbing(std::size_t i) const {
    for (std::size_t j = 0; j < n_; ++j)
      if (!(*this)(i, j).is_zero()) return false;
    return true;
  }

  /// Phi(t) as a dense matrix.
  Eigen::MatrixXd evaluate(double t) const {
    const auto n = static_cast<Eigen::Index>(n_);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j)
        if (!(*this)(i, j).is_zero())
          m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (*this)(i, j).cdf(t);
    return m;
  }

  /// Phi'(t) as a dense matrix.
  Eigen::MatrixXd derivative(double t) const {
    const auto n = static_cast<Eigen::Index>(n_);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j)
        if (!(*this)(i, j).is_zero())
          m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (*this)(i, j).density(t);
    return m;
  }

  /// Throws KernelError naming the first row whose total mass exceeds 1.
  void validate_masses() const {
    for (std::size_t i = 0; i < n_; ++i) {
      const double m = row_mass(i);
      if (m > 1.0 + kMassTolerance)
        throw KernelError("kernel row " + std::to_string(i + 1) + " has total mass " +
                              io::format_number(m) + " > 1",
                          i);
    }
  }

  static constexpr double kMassTolerance = 1e-9;

 private:
  std::size_t n_ = 0;
  std::vector<SubDistribution> entries_;
};

/// Diagonal of W(t) = 1 - sum_j Phi_ij(t) at each grid point.
struct WaitingMatrix {
  TimeGrid grid;
  std::vector<Eigen::VectorXd> diagonal;

  Eigen::MatrixXd at(std::size_t n) const { return diagonal[n].asDiagonal(); }
};

namespace detail {

inline std::vector<Eigen::MatrixXd> tabulate_kernel(const KernelMatrix& phi, const TimeGrid& grid) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(grid.size());
  for (double t : grid) out.push_back(phi.evaluate(t));
  return out;
}

inline WaitingMatrix waiting_from_table(const std::vector<Eigen::MatrixXd>& table, const TimeGrid& grid) {
  WaitingMatrix w{grid, {}};
  w.diagonal.reserve(table.size());
  for (std::size_t n = 0; n < table.size(); ++n) {
    Eigen::VectorXd mass = table[n].rowwise().sum();
    for (Eigen::Index i = 0; i < mass.size(); ++i)
      if (mass(i) > 1.0 + KernelMatrix::kMassTolerance)
        throw KernelError("kernel row " + std::to_string(i + 1) + " has mass " +
                              io::format_number(mass(i)) + " > 1 at t = " + io::format_number(grid[n]),
                          static_cast<std::size_t>(i));
    w.diagonal.push_back((1.0 - mass.array()).max(0.0).matrix());
  }
  return w;
}

}  // namespace detail

inline WaitingMatrix build_waiting_matrix(const KernelMatrix& phi, const TimeGrid& grid) {
  phi.validate_masses();
  return detail::waiting_from_table(detail::tabulate_kernel(phi, grid), grid);
}

/// Time-marching solution of R(t) = W(t) + int_0^t Phi'(tau) R(t - tau) dtau.
///
/// The convolution is written as a Stieltjes integral against dPhi and
/// discretized with the product trapezoidal rule on each grid cell:
///   R_n = W_n + sum_{m=1..n} (Phi_m - Phi_{m-1}) (R_{n-m} + R_{n-m+1}) / 2.
/// Only the m = 1 term involves R_n, so each step is one small linear solve
/// with a constant matrix. The scheme is second order, conserves row sums up
/// to rounding, and tolerates unbounded densities and atoms in the kernel.
inline TransitionProbabilityMatrix solve_markov_renewal(const KernelMatrix& phi, const TimeGrid& grid) {
  if (!grid.is_uniform()) throw GridError("the Volterra solver needs a uniform grid starting at 0");
  phi.validate_masses();
  const auto table = detail::tabulate_kernel(phi, grid);
  const auto w = detail::waiting_from_table(table, grid);
  const auto n_states = static_cast<Eigen::Index>(phi.n_states());
  const std::size_t steps = grid.size();

  std::vector<Eigen::MatrixXd> dphi(steps);
  for (std::size_t m = 1; m < steps; ++m) dphi[m] = table[m] - table[m - 1];

  TransitionProbabilityMatrix R;
  R.grid = grid;
  R.slices.reserve(steps);
  R.slices.push_back(w.at(0));
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n_states, n_states);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
  if (steps > 1) lu.compute(identity - 0.5 * dphi[1]);

  // Cell averages (R_k + R_{k+1}) / 2, filled as the march proceeds.
  std::vector<Eigen::MatrixXd> mid;
  mid.reserve(steps);
  Eigen::MatrixXd rhs(n_states, n_states);
  for (std::size_t n = 1; n < steps; ++n) {
    rhs = w.at(n);
    rhs.noalias() += 0.5 * dphi[1] * R.slices[n - 1];
    for (std::size_t m = 2; m <= n; ++m) rhs.noalias() += dphi[m] * mid[n - m];
    R.slices.push_back(lu.solve(rhs));
    mid.push_back(0.5 * (R.slices[n - 1] + R.slices[n]));
  }

  for (auto& slice : R.slices) {
    const Eigen::VectorXd sums = slice.rowwise().sum();
    R.max_row_sum_deviation = std::max(R.max_row_sum_deviation, (sums.array() - 1.0).abs().maxCoeff());
    const double below = std::max(0.0, -slice.minCoeff());
    const double above = std::max(0.0, slice.maxCoeff() - 1.0);
    R.max_clamp_violation = std::max({R.max_clamp_violation, below, above});
    slice = slice.cwiseMax(0.0).cwiseMin(1.0);
    for (Eigen::Index i = 0; i < n_states; ++i) {
      const double s = slice.row(i).sum();
      if (s > 0.0) slice.row(i) /= s;
    }
  }
  return R;
}

/// Kernel with clock-reset semantics: on entering state A every
/// non-functional system draws a fresh recovery time and the first to fire
/// moves the SoS to A + {k}.
inline KernelMatrix build_kernel_clock_reset(const RecoveryFunctionSet& set, const StateSpace& space) {
  if (set.n_systems() != space.n_systems()) throw ShapeError("function set / state space mismatch");
  KernelMatrix phi(space.size());
  const std::size_t n = space.n_systems();
  for (std::size_t a = 0; a < space.size(); ++a) {
    const auto mask = space.mask(a);
    std::vector<std::size_t> down;
    for (std::size_t k = 0; k < n; ++k)
      if (!(mask & (StateSpace::Mask{1} << k))) down.push_back(k);
    for (std::size_t k : down) {
      std::vector<RecoveryFunction> rivals;
      for (std::size_t j : down)
        if (j != k) rivals.push_back(set[j]);
      phi.set(a, space.index_of(mask | (StateSpace::Mask{1} << k)),
              SubDistribution::competing(set[k], std::move(rivals)));
    }
  }
  return phi;
}

namespace detail {

inline std::size_t draw_index(const std::vector<double>& probs, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left u above the cumulative total; take the last positive entry.
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0.0) return i;
  return 0;
}

}  // namespace detail

/// One semi-Markov path. Per jump: one uniform picks the destination with
/// probability p_ij (leftover mass absorbs in place), a second uniform draws
/// the holding time from Phi_ij(t) / p_ij. Events past the horizon are dropped.
inline RealizationTrajectory simulate_semi_markov(const KernelMatrix& phi, const InitialStateVector& I,
                                                  double horizon, Rng& rng) {
  if (!(horizon > 0.0)) throw DomainError("simulation horizon must be > 0");
  phi.validate_masses();
  I.validate(phi.n_states());
  RealizationTrajectory traj;
  traj.initial_state = detail::draw_index(I.probs, uniform01(rng));
  std::size_t state = traj.initial_state;
  double t = 0.0;
  std::vector<double> probs(phi.n_states());
  for (std::size_t guard = 0; guard < 10'000'000; ++guard) {
    if (phi.is_absorbing(state)) return traj;
    for (std::size_t j = 0; j < phi.n_states(); ++j) probs[j] = phi(state, j).mass();
    const double u = uniform01(rng);
    double acc = 0.0;
    std::size_t dest = phi.n_states();
    for (std::size_t j = 0; j < probs.size(); ++j) {
      acc += probs[j];
      if (u < acc) { dest = j; break; }
    }
    if (dest == phi.n_states()) return traj;  // remaining mass: stay forever
    t += phi(state, dest).sample_holding_time(uniform01(rng));
    if (t > horizon) return traj;
    traj.event_times.push_back(t);
    traj.states.push_back(dest);
    state = dest;
  }
  throw Error("semi-Markov simulation exceeded the event limit (zero holding-time loop?)");
}

/// R_ij(t) as the fraction of paths started in i that occupy j at t.
/// Path r from start state i draws from make_child_rng(seed, i * n_realizations + r).
inline TransitionProbabilityMatrix estimate_R_mc(const KernelMatrix& phi, const TimeGrid& grid,
                                                 std::size_t n_realizations, std::uint64_t seed,
                                                 unsigned threads = 1) {
  if (n_realizations < 1) throw ConfigError("n_realizations must be >= 1");
  phi.validate_masses();
  const std::size_t n_states = phi.n_states();
  const std::size_t n_points = grid.size();
  const std::size_t blocks_per_state = (n_realizations + kMcBlockSize - 1) / kMcBlockSize;

  // Integer occupancy counts [start][point][state]; addition order is irrelevant.
  std::vector<std::uint64_t> counts(n_states * n_points * n_states, 0);
  std::mutex counts_mutex;
  const double horizon = std::max(grid.t_end(), std::numeric_limits<double>::min());

  parallel_for(n_states * blocks_per_state, threads, [&](std::size_t task) {
    const std::size_t start = task / blocks_per_state;
    const std::size_t block = task % blocks_per_state;
    const std::size_t lo = block * kMcBlockSize;
    const std::size_t hi = std::min(n_realizations, lo + kMcBlockSize);
    std::vector<std::uint64_t> local(n_points * n_states, 0);
    InitialStateVector I;
    I.probs.assign(n_states, 0.0);
    I.probs[start] = 1.0;
    for (std::size_t r = lo; r < hi; ++r) {
      Rng rng = make_child_rng(seed, start * n_realizations + r);
      const auto traj = simulate_semi_markov(phi, I, horizon, rng);
      std::size_t ev = 0;
      std::size_t state = traj.initial_state;
      for (std::size_t g = 0; g < n_points; ++g) {
        while (ev < traj.event_times.size() && traj.event_times[ev] <= grid[g]) state = traj.states[ev++];
        ++local[g * n_states + state];
      }
    }
    std::lock_guard lock(counts_mutex);
    std::uint64_t* dst = &counts[start * n_points * n_states];
    for (std::size_t k = 0; k < local.size(); ++k) dst[k] += local[k];
  });

  const auto n = static_cast<double>(n_realizations);
  const auto ns = static_cast<Eigen::Index>(n_states);
  TransitionProbabilityMatrix R;
  R.grid = grid;
  R.slices.assign(n_points, Eigen::MatrixXd::Zero(ns, ns));
  R.stderr.emplace(n_points, Eigen::MatrixXd::Zero(ns, ns));
  for (std::size_t i = 0; i < n_states; ++i)
    for (std::size_t g = 0; g < n_points; ++g)
      for (std::size_t j = 0; j < n_states; ++j) {
        const double p = static_cast<double>(counts[(i * n_points + g) * n_states + j]) / n;
        const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
        R.slices[g](ii, jj) = p;
        (*R.stderr)[g](ii, jj) = n_realizations > 1 ? std::sqrt(p * (1.0 - p) / (n - 1.0)) : 0.0;
      }
  return R;
}

// ---------------------------------------------------------------------------
// File formats

/// Kernel file: {"version": 1, "n_states": N, "entries": [{"from": i,
/// "to": j, "mass": p, "function": {...}}]} with 1-based state indices.
inline KernelMatrix kernel_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw ConfigError("unsupported kernel file version");
    const auto n = j.at("n_states").get<std::size_t>();
    if (n == 0) throw ConfigError("kernel file needs n_states >= 1");
    KernelMatrix phi(n);
    for (const auto& e : j.at("entries")) {
      const auto from = e.at("from").get<std::size_t>();
      const auto to = e.at("to").get<std::size_t>();
      if (from < 1 || from > n || to < 1 || to > n)
        throw ConfigError("kernel entry state index out of range 1.." + std::to_string(n));
      const double mass = e.value("mass", 1.0);
      if (!(mass >= 0.0 && mass <= 1.0))
        throw KernelError("kernel row " + std::to_string(from) + " has an entry mass outside [0, 1]", from - 1);
      phi.set(from - 1, to - 1, SubDistribution::scaled(mass, recovery_function_from_json(e.at("function"))));
    }
    return phi;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed kernel file: ") + e.what());
  }
}

/// One CSV per requested slice plus a JSON manifest naming them.
inline nlohmann::json export_transition_matrix(const TransitionProbabilityMatrix& R,
                                               const std::vector<double>& times,
                                               const std::filesystem::path& dir) {
  const std::size_t n = R.n_states();
  std::vector<std::string> header;
  for (std::size_t j = 0; j < n; ++j) header.push_back("s" + std::to_string(j + 1));
  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["n_states"] = n;
  manifest["grid"] = {{"t_end", R.grid.t_end()}, {"n_points", R.grid.size()}};
  manifest["max_row_sum_deviation"] = R.max_row_sum_deviation;
  manifest["max_clamp_violation"] = R.max_clamp_violation;
  manifest["slices"] = nlohmann::json::array();
  for (std::size_t s = 0; s < times.size(); ++s) {
    const std::size_t g = R.grid.nearest_index(times[s]);
    char name[32];
    std::snprintf(name, sizeof(name), "R_%04zu.csv", s);
    std::vector<std::vector<double>> rows(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        rows[i][j] = R.slices[g](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    io::write_rows_csv(dir / name, header, rows);
    manifest["slices"].push_back({{"requested_time", times[s]}, {"time", R.grid[g]}, {"file", name}});
  }
  io::write_json(dir / "R_manifest.json", manifest);
  return manifest;
}

}  // namespace sosrec
