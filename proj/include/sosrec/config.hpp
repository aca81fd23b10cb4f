#pragma once

// TOML configuration files for the command-line tool. Parsing is strict:
// unknown keys and wrong value types are ConfigErrors, so a typo never
// silently falls back to a default.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <toml.hpp>

#include "sosrec/errors.hpp"
#include "sosrec/pipeline.hpp"
#include "sosrec/recovery_models.hpp"

namespace sosrec::config {

namespace detail {

/// Typed access to one TOML table that remembers which keys were read.
class Reader {
 public:
  Reader(const toml::table& table, std::string where) : table_(table), where_(std::move(where)) {}

  bool has(const std::string& key) const { return table_.contains(key); }

  std::optional<double> number(const std::string& key) {
    const auto* node = take(key);
    if (!node) return std::nullopt;
    if (auto v = node->value_exact<double>()) return *v;
    if (auto v = node->value_exact<std::int64_t>()) return static_cast<double>(*v);
    throw error(key, "a number");
  }

  std::optional<std::int64_t> integer(const std::string& key) {
    const auto* node = take(key);
    if (!node) return std::nullopt;
    if (auto v = node->value_exact<std::int64_t>()) return *v;
    throw error(key, "an integer");
  }

  std::optional<std::size_t> count(const std::string& key) {
    const auto v = integer(key);
    if (v && *v < 0) throw error(key, "a non-negative integer");
    return v ? std::optional<std::size_t>(static_cast<std::size_t>(*v)) : std::nullopt;
  }

  std::optional<std::string> string(const std::string& key) {
    const auto* node = take(key);
    if (!node) return std::nullopt;
    if (auto v = node->value_exact<std::string>()) return *v;
    throw error(key, "a string");
  }

  std::optional<bool> boolean(const std::string& key) {
    const auto* node = take(key);
    if (!node) return std::nullopt;
    if (auto v = node->value_exact<bool>()) return *v;
    throw error(key, "a boolean");
  }

  std::optional<std::vector<double>> numbers(const std::string& key) {
    const auto* node = take(key);
    if (!node) return std::nullopt;
    const auto* arr = node->as_array();
    if (!arr) throw error(key, "an array of numbers");
    std::vector<double> out;
    for (const auto& el : *arr) {
      if (auto v = el.value_exact<double>()) out.push_back(*v);
      else if (auto i = el.value_exact<std::int64_t>()) out.push_back(static_cast<double>(*i));
      else throw error(key, "an array of numbers");
    }
    return out;
  }

  std::optional<std::vector<std::size_t>> counts(const std::string& key) {
    const auto* node = take(key);
    if (!node) return std::nullopt;
    const auto* arr = node->as_array();
    if (!arr) throw error(key, "an array of integers");
    std::vector<std::size_t> out;
    for (const auto& el : *arr) {
      const auto v = el.value_exact<std::int64_t>();
      if (!v || *v < 0) throw error(key, "an array of non-negative integers");
      out.push_back(static_cast<std::size_t>(*v));
    }
    return out;
  }

  std::optional<Reader> table(const std::string& key) {
    const auto* node = take(key);
    if (!node) return std::nullopt;
    const auto* t = node->as_table();
    if (!t) throw error(key, "a table");
    return Reader(*t, path(key));
  }

  std::vector<Reader> tables(const std::string& key) {
    std::vector<Reader> out;
    const auto* node = take(key);
    if (!node) return out;
    const auto* arr = node->as_array();
    if (!arr) throw error(key, "an array of tables");
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto* t = (*arr)[i].as_table();
      if (!t) throw error(key, "an array of tables");
      out.emplace_back(*t, path(key) + "[" + std::to_string(i) + "]");
    }
    return out;
  }

  /// Throws on the first key that no accessor asked for.
  void finish() const {
    for (const auto& [k, _] : table_)
      if (!seen_.count(std::string(k.str()))) throw ConfigError("unknown key '" + path(std::string(k.str())) + "'");
  }

  const std::string& where() const { return where_; }

 private:
  const toml::node* take(const std::string& key) {
    seen_.insert(key);
    return table_.get(key);
  }

  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

  ConfigError error(const std::string& key, const std::string& expected) const {
    return ConfigError("'" + path(key) + "' must be " + expected);
  }

  const toml::table& table_;
  std::string where_;
  std::set<std::string> seen_;
};

inline toml::table parse_file(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
  try {
    return toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "cannot parse " << path.string() << ": " << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError(msg.str());
  }
}

inline toml::table parse_string(std::string_view text) {
  try {
    return toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw ConfigError(std::string("cannot parse config: ") + std::string(e.description()));
  }
}

inline ParameterRange read_range(Reader& r, const std::string& key, ParameterRange fallback) {
  const auto v = r.numbers(key);
  if (!v) return fallback;
  if (v->size() != 2) throw ConfigError("'" + r.where() + "." + key + "' must be [min, max]");
  return {(*v)[0], (*v)[1]};
}

inline FunctionGeneratorConfig read_generator(Reader r) {
  FunctionGeneratorConfig g;
  if (auto f = r.string("family")) g.family = parse_family(*f);
  g.median = read_range(r, "median", g.median);
  g.dispersion = read_range(r, "dispersion", g.dispersion);
  g.shape = read_range(r, "shape", g.shape);
  g.scale = read_range(r, "scale", g.scale);
  r.finish();
  return g;
}

inline toml::array range_array(const ParameterRange& p) { return toml::array{p.min, p.max}; }

template <typename T>
toml::array to_array(const std::vector<T>& v) {
  toml::array a;
  for (const auto& x : v) {
    if constexpr (std::is_integral_v<T>) a.push_back(static_cast<std::int64_t>(x));
    else a.push_back(x);
  }
  return a;
}

/// One [[systems]] entry: a recovery function plus an optional repeat count.
inline std::vector<RecoveryFunction> read_system(Reader r) {
  const auto family = r.string("family");
  if (!family) throw ConfigError("'" + r.where() + ".family' is required");
  const std::size_t repeat = r.count("count").value_or(1);
  if (repeat < 1) throw ConfigError("'" + r.where() + ".count' must be >= 1");
  auto need = [&](const std::string& key) {
    const auto v = r.number(key);
    if (!v) throw ConfigError("'" + r.where() + "." + key + "' is required for family " + *family);
    return *v;
  };
  std::optional<RecoveryFunction> f;
  switch (parse_family(*family)) {
    case Family::lognormal: {
      const double median = need("median");
      f = RecoveryFunction::lognormal(median, need("dispersion"));
      break;
    }
    case Family::weibull: {
      const double shape = need("shape");
      f = RecoveryFunction::weibull(shape, need("scale"));
      break;
    }
    case Family::piecewise_linear: {
      auto times = r.numbers("times");
      auto values = r.numbers("values");
      if (!times || !values) throw ConfigError("'" + r.where() + "' needs times and values");
      f = RecoveryFunction::piecewise_linear(std::move(*times), std::move(*values));
      break;
    }
  }
  r.finish();
  return std::vector<RecoveryFunction>(repeat, *f);
}

inline std::optional<RecoveryFunctionSet> read_systems(Reader& r) {
  std::vector<RecoveryFunction> fs;
  for (auto& s : r.tables("systems")) {
    auto more = read_system(std::move(s));
    fs.insert(fs.end(), more.begin(), more.end());
  }
  if (fs.empty()) return std::nullopt;
  if (fs.size() > kMaxSystems) throw ConfigError("at most 20 systems are supported");
  return RecoveryFunctionSet(std::move(fs));
}

}  // namespace detail

inline unsigned read_threads(detail::Reader& r) {
  const auto v = r.count("threads").value_or(1);
  if (v < 1 || v > 1024) throw ConfigError("'threads' must lie in 1..1024");
  return static_cast<unsigned>(v);
}

// ---------------------------------------------------------------------------
// Experiment (gen-data, train, eval, reproduce)

inline ExperimentConfig experiment_from_toml(const toml::table& table) {
  detail::Reader root(table, "");
  ExperimentConfig cfg;
  if (auto v = root.string("mode")) cfg.mode = parse_mode(*v);
  if (cfg.mode == ExperimentMode::disparate) cfg = ExperimentConfig::disparate_default();
  if (auto v = root.integer("seed")) {
    if (*v < 0) throw ConfigError("'seed' must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(*v);
  }
  if (auto v = root.integer("seed_override")) {
    if (*v < 0) throw ConfigError("'seed_override' must be >= 0");
    cfg.seed_override = static_cast<std::uint64_t>(*v);
  }
  cfg.threads = read_threads(root);

  if (auto d = root.table("data")) {
    if (auto v = d->count("n_systems")) cfg.n_systems = *v;
    if (auto v = d->count("n_train")) cfg.n_train = *v;
    if (auto v = d->count("n_test")) cfg.n_test = *v;
    if (auto v = d->count("m")) cfg.m = *v;
    if (auto v = d->number("t_end")) {
      if (!(*v > 0.0)) throw ConfigError("'data.t_end' must be > 0 (omit it for the automatic horizon)");
      cfg.t_end = *v;
    }
    if (auto v = d->string("output_scheme")) cfg.output_scheme = parse_output_scheme(*v);
    if (auto v = d->count("n_output_times")) cfg.n_output_times = *v;
    if (auto v = d->count("mc_realizations")) cfg.mc_realizations = *v;
    d->finish();
  }
  if (auto g = root.table("generator")) cfg.generator = detail::read_generator(std::move(*g));
  if (auto n = root.table("network")) {
    if (auto v = n->count("p")) cfg.p = *v;
    if (auto v = n->counts("hidden")) cfg.hidden = *v;
    if (auto v = n->string("activation")) cfg.activation = parse_activation(*v);
    n->finish();
  }
  if (auto t = root.table("training")) {
    auto& tc = cfg.training;
    if (auto v = t->number("learning_rate")) tc.learning_rate = *v;
    if (auto v = t->count("iterations")) tc.iterations = *v;
    if (auto v = t->string("optimizer")) tc.optimizer = parse_optimizer(*v);
    if (auto v = t->number("beta1")) tc.beta1 = *v;
    if (auto v = t->number("beta2")) tc.beta2 = *v;
    if (auto v = t->number("epsilon")) tc.epsilon = *v;
    if (auto v = t->count("record_every")) tc.record_every = *v;
    if (auto v = t->number("decay_steps")) tc.decay_steps = *v;
    t->finish();
  }
  root.finish();
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path) {
  return experiment_from_toml(detail::parse_file(path));
}

/// The resolved configuration, including the applied seed override. The
/// thread count is left out: it never changes results.
inline toml::table experiment_to_toml(const ExperimentConfig& cfg) {
  toml::table data{{"n_systems", static_cast<std::int64_t>(cfg.n_systems)},
                   {"n_train", static_cast<std::int64_t>(cfg.n_train)},
                   {"n_test", static_cast<std::int64_t>(cfg.n_test)},
                   {"m", static_cast<std::int64_t>(cfg.m)},
                   {"t_end", cfg.horizon()},
                   {"output_scheme", std::string(to_string(cfg.output_scheme))},
                   {"n_output_times", static_cast<std::int64_t>(cfg.n_output_times)},
                   {"mc_realizations", static_cast<std::int64_t>(cfg.mc_realizations)}};
  toml::table generator{{"family", std::string(to_string(cfg.generator.family))},
                        {"median", detail::range_array(cfg.generator.median)},
                        {"dispersion", detail::range_array(cfg.generator.dispersion)},
                        {"shape", detail::range_array(cfg.generator.shape)},
                        {"scale", detail::range_array(cfg.generator.scale)}};
  toml::table network{{"p", static_cast<std::int64_t>(cfg.p)},
                      {"hidden", detail::to_array(cfg.hidden)},
                      {"activation", std::string(to_string(cfg.activation))}};
  const auto& tc = cfg.training;
  toml::table training{{"learning_rate", tc.learning_rate},
                       {"iterations", static_cast<std::int64_t>(tc.iterations)},
                       {"optimizer", std::string(to_string(tc.optimizer))},
                       {"beta1", tc.beta1},
                       {"beta2", tc.beta2},
                       {"epsilon", tc.epsilon},
                       {"record_every", static_cast<std::int64_t>(tc.record_every)},
                       {"decay_steps", tc.decay_steps}};
  toml::table out{{"mode", std::string(to_string(cfg.mode))},
                  {"seed", static_cast<std::int64_t>(cfg.seed)},
                  {"data", data},
                  {"generator", generator},
                  {"network", network},
                  {"training", training}};
  if (cfg.seed_override) out.insert("seed_override", static_cast<std::int64_t>(*cfg.seed_override));
  return out;
}

// ---------------------------------------------------------------------------
// simulate

struct RandomSets {
  std::size_t n_sets = 20;
  std::size_t n_systems = 4;
  bool identical = true;
  FunctionGeneratorConfig generator;
};

struct SimulateConfig {
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::size_t n_realizations = 10'000;
  double t_end = 0.0;  // 0 = automatic
  std::size_t n_points = 101;
  std::optional<RecoveryFunctionSet> systems;
  std::optional<RandomSets> random;
  std::optional<std::vector<double>> functionality;
  bool exact = false;

  std::size_t n_systems() const { return systems ? systems->n_systems() : random->n_systems; }

  double horizon() const {
    if (t_end > 0.0) return t_end;
    if (random) return random->generator.slowest_time_to_reach(kAutoHorizonLevel);
    double h = 0.0;
    for (const auto& f : *systems) h = std::max(h, f.time_to_reach(kAutoHorizonLevel));
    return h;
  }

  void validate() const {
    if (systems.has_value() == random.has_value())
      throw ConfigError("give either [[systems]] or a [random] table, not both or neither");
    if (n_realizations < 1) throw ConfigError("n_realizations must be >= 1");
    if (n_points < 2) throw ConfigError("n_points must be >= 2");
    if (t_end < 0.0) throw ConfigError("t_end must be > 0");
    if (random) {
      if (random->n_sets < 1) throw ConfigError("random.n_sets must be >= 1");
      if (random->n_systems < 1 || random->n_systems > kMaxSystems) throw ConfigError("random.n_systems must lie in 1..20");
      random->generator.validate();
    }
    if (functionality && functionality->size() != (std::size_t{1} << n_systems()))
      throw ConfigError("functionality must have 2^n_systems entries");
    if (exact && n_systems() > 12) throw ConfigError("exact enumeration is limited to 12 systems");
    if (!(horizon() > 0.0)) throw ConfigError("simulation horizon must be > 0");
  }
};

inline SimulateConfig simulate_from_toml(const toml::table& table) {
  detail::Reader root(table, "");
  SimulateConfig cfg;
  if (auto v = root.integer("seed")) {
    if (*v < 0) throw ConfigError("'seed' must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(*v);
  }
  cfg.threads = read_threads(root);
  if (auto v = root.count("n_realizations")) cfg.n_realizations = *v;
  if (auto v = root.number("t_end")) {
    if (!(*v > 0.0)) throw ConfigError("'t_end' must be > 0");
    cfg.t_end = *v;
  }
  if (auto v = root.count("n_points")) cfg.n_points = *v;
  if (auto v = root.boolean("exact")) cfg.exact = *v;
  cfg.functionality = root.numbers("functionality");
  cfg.systems = detail::read_systems(root);
  if (auto r = root.table("random")) {
    RandomSets rs;
    if (auto v = r->count("n_sets")) rs.n_sets = *v;
    if (auto v = r->count("n_systems")) rs.n_systems = *v;
    if (auto v = r->string("mode")) rs.identical = parse_mode(*v) == ExperimentMode::identical;
    if (auto g = r->table("generator")) rs.generator = detail::read_generator(std::move(*g));
    r->finish();
    cfg.random = rs;
  }
  root.finish();
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// solve

enum class KernelSource { clock_reset, file };

struct SolveConfig {
  double t_end = 1.0;
  double dt = 0.01;
  std::vector<double> export_times;  // empty = {t_end}
  KernelSource kernel = KernelSource::clock_reset;
  std::filesystem::path kernel_file;  // resolved against the config file
  std::optional<RecoveryFunctionSet> systems;
  std::optional<std::vector<double>> functionality;
  std::optional<std::vector<double>> initial;
  std::size_t mc_check = 0;  // > 0: also estimate R by simulation
  std::uint64_t seed = 1;
  unsigned threads = 1;

  void validate() const {
    if (!(t_end > 0.0) || !std::isfinite(t_end)) throw ConfigError("t_end must be > 0");
    if (!(dt > 0.0) || dt > t_end) throw ConfigError("dt must lie in (0, t_end]");
    for (double t : export_times)
      if (t < 0.0 || t > t_end * (1.0 + 1e-12)) throw ConfigError("export_times must lie in [0, t_end]");
    if (kernel == KernelSource::clock_reset && !systems)
      throw ConfigError("the clock-reset kernel needs [[systems]]");
    if (kernel == KernelSource::file && systems) throw ConfigError("[[systems]] is only used by the clock-reset kernel");
  }
};

inline SolveConfig solve_from_toml(const toml::table& table, const std::filesystem::path& base_dir) {
  detail::Reader root(table, "");
  SolveConfig cfg;
  if (auto v = root.number("t_end")) cfg.t_end = *v;
  if (auto v = root.number("dt")) cfg.dt = *v;
  if (auto v = root.numbers("export_times")) cfg.export_times = *v;
  if (auto v = root.count("mc_check")) cfg.mc_check = *v;
  if (auto v = root.integer("seed")) {
    if (*v < 0) throw ConfigError("'seed' must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(*v);
  }
  cfg.threads = read_threads(root);
  cfg.functionality = root.numbers("functionality");
  cfg.initial = root.numbers("initial");
  cfg.systems = detail::read_systems(root);
  if (auto k = root.table("kernel")) {
    const auto type = k->string("type").value_or("clock-reset");
    if (type == "clock-reset") {
      cfg.kernel = KernelSource::clock_reset;
    } else if (type == "file") {
      cfg.kernel = KernelSource::file;
      const auto path = k->string("path");
      if (!path) throw ConfigError("'kernel.path' is required for a kernel file");
      cfg.kernel_file = std::filesystem::path(*path).is_absolute() ? std::filesystem::path(*path) : base_dir / *path;
    } else {
      throw ConfigError("unknown kernel type '" + type + "' (expected clock-reset or file)");
    }
    k->finish();
  }
  root.finish();
  cfg.validate();
  return cfg;
}

}  // namespace sosrec::config
