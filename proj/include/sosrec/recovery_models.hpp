#pragma once

// Parametric recovery functions: the CDF of a single system's random
// recovery time, plus sampling and random generation of instances.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include <boost/math/special_functions/erf.hpp>
#include <json.hpp>

#include "sosrec/errors.hpp"
#include "sosrec/random.hpp"

namespace sosrec {

enum class Family { lognormal, weibull, piecewise_linear };

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::lognormal: return "lognormal";
    case Family::weibull: return "weibull";
    case Family::piecewise_linear: return "piecewise-linear";
  }
  return "?";
}

inline Family parse_family(std::string_view s) {
  if (s == "lognormal") return Family::lognormal;
  if (s == "weibull") return Family::weibull;
  if (s == "piecewise-linear") return Family::piecewise_linear;
  throw ConfigError("unknown recovery family '" + std::string(s) + "'");
}

/// Lognormal CDF: Phi(ln(t / median) / dispersion).
struct Lognormal {
  double median = 1.0;
  double dispersion = 1.0;
  bool operator==(const Lognormal&) const = default;
};

/// Weibull CDF: 1 - exp(-(t / scale)^shape). shape = 1 is the exponential.
struct Weibull {
  double shape = 1.0;
  double scale = 1.0;
  bool operator==(const Weibull&) const = default;
};

/// Linear interpolation between knots. Repeated knot times encode a jump;
/// the CDF is right-continuous there and equals 1 past the last knot.
struct PiecewiseLinear {
  std::vector<double> times;
  std::vector<double> values;
  bool operator==(const PiecewiseLinear&) const = default;
};

namespace detail {

inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double std_normal_quantile(double u) {
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
}

inline void require_time(double t) {
  if (!(t >= 0.0)) throw DomainError("recovery function evaluated at negative or NaN time");
}

inline bool positive_finite(double x) { return x > 0.0 && std::isfinite(x); }

}  // namespace detail

class RecoveryFunction {
 public:
  using Params = std::variant<Lognormal, Weibull, PiecewiseLinear>;

  static RecoveryFunction lognormal(double median, double dispersion) {
    if (!detail::positive_finite(median) || !detail::positive_finite(dispersion))
      throw ConfigError("lognormal requires median > 0 and dispersion > 0");
    return RecoveryFunction(Lognormal{median, dispersion});
  }

  static RecoveryFunction weibull(double shape, double scale) {
    if (!detail::positive_finite(shape) || !detail::positive_finite(scale))
      throw ConfigError("weibull requires shape > 0 and scale > 0");
    return RecoveryFunction(Weibull{shape, scale});
  }

  static RecoveryFunction exponential(double rate) { return weibull(1.0, 1.0 / rate); }

  static RecoveryFunction piecewise_linear(std::vector<double> times, std::vector<double> values) {
    if (times.size() != values.size() || times.size() < 2)
      throw ConfigError("piecewise-linear needs matching knot times/values, at least two knots");
    if (!(times.front() >= 0.0)) throw ConfigError("piecewise-linear knot times must be >= 0");
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (!std::isfinite(times[i]) || !(values[i] >= 0.0 && values[i] <= 1.0))
        throw ConfigError("piecewise-linear values must lie in [0, 1]");
      if (i > 0 && (times[i] < times[i - 1] || values[i] < values[i - 1]))
        throw ConfigError("piecewise-linear knots must be nondecreasing in time and value");
    }
    if (values.front() != 0.0 || values.back() != 1.0)
      throw ConfigError("piecewise-linear values must start at 0 and end at exactly 1");
    RecoveryFunction f(PiecewiseLinear{std::move(times), std::move(values)});
    if (f.cdf(0.0) != 0.0) throw ConfigError("piecewise-linear function must vanish at t = 0");
    return f;
  }

  Family family() const {
    return static_cast<Family>(params_.index());
  }
  const Params& params() const { return params_; }

  double cdf(double t) const {
    detail::require_time(t);
    return std::visit([t](const auto& p) { return cdf_impl(p, t); }, params_);
  }

  /// Right derivative of the CDF.
  double density(double t) const {
    detail::require_time(t);
    return std::visit([t](const auto& p) { return density_impl(p, t); }, params_);
  }

  /// Generalized inverse inf{t : cdf(t) >= u} for u in [0, 1).
  double quantile(double u) const {
    if (!(u >= 0.0 && u < 1.0)) throw DomainError("quantile level must lie in [0, 1)");
    if (u == 0.0) return 0.0;
    return std::visit([u](const auto& p) { return quantile_impl(p, u); }, params_);
  }

  /// Smallest time by which the CDF has reached `level` (level < 1).
  double time_to_reach(double level) const { return quantile(level); }

  bool operator==(const RecoveryFunction&) const = default;

 private:
  explicit RecoveryFunction(Params p) : params_(std::move(p)) {}

  static double cdf_impl(const Lognormal& p, double t) {
    if (t == 0.0) return 0.0;
    if (std::isinf(t)) return 1.0;
    return detail::std_normal_cdf(std::log(t / p.median) / p.dispersion);
  }
  static double cdf_impl(const Weibull& p, double t) {
    return -std::expm1(-std::pow(t / p.scale, p.shape));
  }
  static double cdf_impl(const PiecewiseLinear& p, double t) {
    if (t < p.times.front()) return 0.0;
    if (t >= p.times.back()) return 1.0;
    const auto j = static_cast<std::size_t>(
        std::upper_bound(p.times.begin(), p.times.end(), t) - p.times.begin());
    const std::size_t i = j - 1;
    const double w = (t - p.times[i]) / (p.times[j] - p.times[i]);
    return p.values[i] + w * (p.values[j] - p.values[i]);
  }

  static double density_impl(const Lognormal& p, double t) {
    if (t == 0.0 || std::isinf(t)) return 0.0;
    const double z = std::log(t / p.median) / p.dispersion;
    return std::exp(-0.5 * z * z) / (std::sqrt(2.0 * std::numbers::pi) * p.dispersion * t);
  }
  static double density_impl(const Weibull& p, double t) {
    if (t == 0.0) {
      if (p.shape < 1.0) return std::numeric_limits<double>::infinity();
      return p.shape == 1.0 ? 1.0 / p.scale : 0.0;
    }
    const double x = t / p.scale;
    const double xk = std::pow(x, p.shape);
    return p.shape / p.scale * (xk / x) * std::exp(-xk);
  }
  static double density_impl(const PiecewiseLinear& p, double t) {
    if (t < p.times.front() || t >= p.times.back()) return 0.0;
    const auto j = static_cast<std::size_t>(
        std::upper_bound(p.times.begin(), p.times.end(), t) - p.times.begin());
    const std::size_t i = j - 1;
    return (p.values[j] - p.values[i]) / (p.times[j] - p.times[i]);
  }

  static double quantile_impl(const Lognormal& p, double u) {
    return p.median * std::exp(p.dispersion * detail::std_normal_quantile(u));
  }
  static double quantile_impl(const Weibull& p, double u) {
    return p.scale * std::pow(-std::log1p(-u), 1.0 / p.shape);
  }
  static double quantile_impl(const PiecewiseLinear& p, double u) {
    const auto j = static_cast<std::size_t>(
        std::lower_bound(p.values.begin(), p.values.end(), u) - p.values.begin());
    const std::size_t i = j - 1;
    const double w = (u - p.values[i]) / (p.values[j] - p.values[i]);
    return p.times[i] + w * (p.times[j] - p.times[i]);
  }

  Params params_;
};

inline double eval_cdf(const RecoveryFunction& f, double t) { return f.cdf(t); }
inline double eval_density(const RecoveryFunction& f, double t) { return f.density(t); }

/// Inverse-transform draw; consumes exactly one value from `rng`.
inline double sample_recovery_time(const RecoveryFunction& f, Rng& rng) {
  return f.quantile(uniform01(rng));
}

/// One recovery function per system; system order is significant.
class RecoveryFunctionSet {
 public:
  RecoveryFunctionSet() = default;
  explicit RecoveryFunctionSet(std::vector<RecoveryFunction> functions)
      : functions_(std::move(functions)) {
    if (functions_.empty()) throw ConfigError("a recovery function set needs at least one system");
  }

  std::size_t n_systems() const { return functions_.size(); }
  const RecoveryFunction& operator[](std::size_t k) const { return functions_[k]; }
  const std::vector<RecoveryFunction>& functions() const { return functions_; }
  auto begin() const { return functions_.begin(); }
  auto end() const { return functions_.end(); }

  bool operator==(const RecoveryFunctionSet&) const = default;

 private:
  std::vector<RecoveryFunction> functions_;
};

struct ParameterRange {
  double min = 0.0;
  double max = 0.0;
  double draw(Rng& rng) const { return min + (max - min) * uniform01(rng); }
};

/// Recipe for random recovery functions. Lognormal draws median and
/// dispersion uniformly; weibull draws shape and scale uniformly.
struct FunctionGeneratorConfig {
  Family family = Family::lognormal;
  ParameterRange median{1.0, 3.0};
  ParameterRange dispersion{0.3, 0.6};
  ParameterRange shape{1.0, 3.0};
  ParameterRange scale{1.0, 3.0};
  bool identical_mode = false;

  void validate() const {
    auto check = [](const ParameterRange& r, const char* name) {
      if (!(r.min > 0.0) || !std::isfinite(r.max) || r.min > r.max)
        throw ConfigError(std::string("invalid generator range for ") + name +
                          ": need 0 < min <= max");
    };
    switch (family) {
      case Family::lognormal:
        check(median, "median");
        check(dispersion, "dispersion");
        break;
      case Family::weibull:
        check(shape, "shape");
        check(scale, "scale");
        break;
      case Family::piecewise_linear:
        throw ConfigError("random generation is not available for the piecewise-linear family");
    }
  }

  /// Latest time at which any function this config can produce reaches `level`.
  double slowest_time_to_reach(double level) const {
    validate();
    switch (family) {
      case Family::lognormal:
        return RecoveryFunction::lognormal(median.max, dispersion.max).time_to_reach(level);
      case Family::weibull: {
        // Largest scale; the slowest shape depends on the level, so try both ends.
        const double a = RecoveryFunction::weibull(shape.min, scale.max).time_to_reach(level);
        const double b = RecoveryFunction::weibull(shape.max, scale.max).time_to_reach(level);
        return std::max(a, b);
      }
      case Family::piecewise_linear: break;
    }
    return 0.0;
  }
};

inline RecoveryFunction sample_random_function(const FunctionGeneratorConfig& cfg, Rng& rng) {
  switch (cfg.family) {
    case Family::lognormal: {
      const double m = cfg.median.draw(rng);
      const double b = cfg.dispersion.draw(rng);
      return RecoveryFunction::lognormal(m, b);
    }
    case Family::weibull: {
      const double k = cfg.shape.draw(rng);
      const double s = cfg.scale.draw(rng);
      return RecoveryFunction::weibull(k, s);
    }
    case Family::piecewise_linear: break;
  }
  throw ConfigError("random generation is not available for the piecewise-linear family");
}

inline RecoveryFunctionSet sample_random_function_set(const FunctionGeneratorConfig& cfg,
                                                      std::size_t n_systems, Rng& rng) {
  cfg.validate();
  if (n_systems == 0) throw ConfigError("n_systems must be >= 1");
  std::vector<RecoveryFunction> out;
  out.reserve(n_systems);
  if (cfg.identical_mode) {
    out.assign(n_systems, sample_random_function(cfg, rng));
  } else {
    for (std::size_t k = 0; k < n_systems; ++k) out.push_back(sample_random_function(cfg, rng));
  }
  return RecoveryFunctionSet(std::move(out));
}

// JSON form: {"family": "...", "params": {...}}.

inline void to_json(nlohmann::json& j, const RecoveryFunction& f) {
  j = nlohmann::json::object();
  j["family"] = std::string(to_string(f.family()));
  std::visit(
      [&j](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Lognormal>) {
          j["params"] = {{"median", p.median}, {"dispersion", p.dispersion}};
        } else if constexpr (std::is_same_v<T, Weibull>) {
          j["params"] = {{"shape", p.shape}, {"scale", p.scale}};
        } else {
          j["params"] = {{"times", p.times}, {"values", p.values}};
        }
      },
      f.params());
}

inline RecoveryFunction recovery_function_from_json(const nlohmann::json& j) {
  try {
    const auto family = parse_family(j.at("family").get<std::string>());
    const auto& p = j.at("params");
    switch (family) {
      case Family::lognormal:
        return RecoveryFunction::lognormal(p.at("median").get<double>(),
                                           p.at("dispersion").get<double>());
      case Family::weibull:
        return RecoveryFunction::weibull(p.at("shape").get<double>(), p.at("scale").get<double>());
      case Family::piecewise_linear:
        return RecoveryFunction::piecewise_linear(p.at("times").get<std::vector<double>>(),
                                                  p.at("values").get<std::vector<double>>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed recovery function JSON: ") + e.what());
  }
  throw ConfigError("malformed recovery function JSON");
}

inline void to_json(nlohmann::json& j, const RecoveryFunctionSet& s) {
  j = nlohmann::json::array();
  for (const auto& f : s) j.push_back(f);
}

/// Values of `f` on a sorted list of times.
inline std::vector<double> tabulate(const RecoveryFunction& f, const std::vector<double>& times) {
  std::vector<double> out;
  out.reserve(times.size());
  for (double t : times) out.push_back(f.cdf(t));
  return out;
}

}  // namespace sosrec
