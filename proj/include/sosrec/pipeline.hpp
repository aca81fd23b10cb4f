#pragma once

// End-to-end experiments: simulate SoS recovery curves for random recovery
// function sets, train a DeepONet on them and score it on held-out sets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sosrec/errors.hpp"
#include "sosrec/io.hpp"
#include "sosrec/operator_net.hpp"
#include "sosrec/parallel.hpp"
#include "sosrec/random.hpp"
#include "sosrec/recovery_models.hpp"
#include "sosrec/sos_core.hpp"

namespace sosrec {

enum class ExperimentMode { identical, disparate };
enum class OutputScheme { shared, random };
enum class DatasetRole { train, test };

inline std::string_view to_string(ExperimentMode m) { return m == ExperimentMode::identical ? "identical" : "disparate"; }
inline std::string_view to_string(OutputScheme s) { return s == OutputScheme::shared ? "shared" : "random"; }
inline std::string_view to_string(DatasetRole r) { return r == DatasetRole::train ? "train" : "test"; }

inline ExperimentMode parse_mode(std::string_view s) {
  if (s == "identical") return ExperimentMode::identical;
  if (s == "disparate") return ExperimentMode::disparate;
  throw ConfigError("unknown experiment mode '" + std::string(s) + "' (expected identical or disparate)");
}

inline OutputScheme parse_output_scheme(std::string_view s) {
  if (s == "shared") return OutputScheme::shared;
  if (s == "random") return OutputScheme::random;
  throw ConfigError("unknown output-time scheme '" + std::string(s) + "'");
}

/// The CDF level the slowest configured recovery function reaches at t_end
/// when the horizon is chosen automatically.
inline constexpr double kAutoHorizonLevel = 0.999;

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::identical;
  std::size_t n_systems = 4;
  std::size_t n_train = 20;
  std::size_t n_test = 200;
  std::size_t m = 50;
  double t_end = 0.0;  // 0 selects the automatic horizon
  OutputScheme output_scheme = OutputScheme::shared;
  std::size_t n_output_times = 100;
  std::size_t mc_realizations = 10'000;
  FunctionGeneratorConfig generator;
  std::size_t p = 40;
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::tanh;
  TrainingConfig training;
  std::uint64_t seed = 2021;
  std::optional<std::uint64_t> seed_override;
  unsigned threads = 1;

  static ExperimentConfig identical_default() { return ExperimentConfig{}; }

  static ExperimentConfig disparate_default() {
    ExperimentConfig cfg;
    cfg.mode = ExperimentMode::disparate;
    cfg.n_test = 20;
    return cfg;
  }

  std::uint64_t effective_seed() const { return seed_override.value_or(seed); }

  double horizon() const {
    if (t_end > 0.0) return t_end;
    return generator.slowest_time_to_reach(kAutoHorizonLevel);
  }

  FunctionGeneratorConfig effective_generator() const {
    FunctionGeneratorConfig g = generator;
    g.identical_mode = mode == ExperimentMode::identical;
    return g;
  }

  NetworkShape network_shape() const { return NetworkShape{n_systems, m, p, hidden, activation}; }

  void validate() const {
    if (n_systems < 1 || n_systems > kMaxSystems) throw ConfigError("n_systems must lie in 1..20");
    if (n_train < 1) throw ConfigError("n_train must be >= 1");
    if (n_test < 1) throw ConfigError("n_test must be >= 1");
    if (m < 2) throw ConfigError("m (sensor count) must be >= 2");
    if (t_end < 0.0 || !std::isfinite(t_end)) throw ConfigError("t_end must be > 0 (or 0 for automatic)");
    if (n_output_times < (output_scheme == OutputScheme::shared ? 2u : 1u))
      throw ConfigError("n_output_times too small for the output-time scheme");
    if (mc_realizations < 1) throw ConfigError("mc_realizations must be >= 1");
    if (p < 1) throw ConfigError("p must be >= 1");
    for (auto h : hidden)
      if (h < 1) throw ConfigError("hidden layer sizes must be >= 1");
    generator.validate();
    training.validate();
    if (!(horizon() > 0.0)) throw ConfigError("experiment horizon must be > 0");
  }
};

/// Equally spaced sensors on [0, t_end].
inline std::vector<double> sensor_grid(double t_end, std::size_t m) { return TimeGrid::uniform(t_end, m).times(); }

/// Branch input for one function set: system-major blocks of sensor values.
inline std::vector<double> branch_input(const RecoveryFunctionSet& set, const std::vector<double>& sensors) {
  std::vector<double> row;
  row.reserve(set.n_systems() * sensors.size());
  for (const auto& f : set)
    for (double s : sensors) row.push_back(f.cdf(s));
  return row;
}

struct GeneratedData {
  OperatorDataset dataset;
  std::vector<RecoveryFunctionSet> function_sets;
  std::vector<RecoveryCurve> curves;  // MC reference per sample
};

/// Child-seed layout under the master seed: stream 1 feeds the training
/// split, stream 2 the test split, stream 3 model initialization. Inside a
/// split, sample k uses streams 3k (functions), 3k+1 (MC), 3k+2 (output times).
inline std::uint64_t role_seed(std::uint64_t master, DatasetRole role) {
  return derive_seed(master, role == DatasetRole::train ? 1 : 2);
}
inline std::uint64_t model_seed(std::uint64_t master) { return derive_seed(master, 3); }

inline GeneratedData generate_dataset(const ExperimentConfig& cfg, DatasetRole role) {
  cfg.validate();
  const std::uint64_t base = role_seed(cfg.effective_seed(), role);
  const std::size_t n = role == DatasetRole::train ? cfg.n_train : cfg.n_test;
  const double t_end = cfg.horizon();
  const auto space = build_state_space(cfg.n_systems);
  const auto F = build_equal_impact_F(space);
  const auto I = InitialStateVector::first_state(space.size());
  const auto gen = cfg.effective_generator();

  GeneratedData out;
  auto& ds = out.dataset;
  ds.sensors = sensor_grid(t_end, cfg.m);
  ds.t_end = t_end;
  ds.n_systems = cfg.n_systems;
  ds.branch_inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.n_systems * cfg.m));
  ds.output_times.resize(n);
  ds.targets.resize(n);
  ds.target_stderr.resize(n);
  out.function_sets.resize(n);
  out.curves.resize(n);

  const TimeGrid shared_grid = TimeGrid::uniform(t_end, cfg.n_output_times);
  parallel_for(n, cfg.threads, [&](std::size_t k) {
    Rng fn_rng = make_child_rng(base, 3 * k);
    auto set = sample_random_function_set(gen, cfg.n_systems, fn_rng);
    TimeGrid grid = shared_grid;
    if (cfg.output_scheme == OutputScheme::random) {
      Rng t_rng = make_child_rng(base, 3 * k + 2);
      std::vector<double> times(cfg.n_output_times);
      for (auto& t : times) t = t_end * uniform01(t_rng);
      std::sort(times.begin(), times.end());
      times.erase(std::unique(times.begin(), times.end()), times.end());
      grid = TimeGrid::from_times(std::move(times));
    }
    auto curve = estimate_recovery_curve_mc(set, space, F, I, grid, cfg.mc_realizations,
                                            derive_seed(base, 3 * k + 1));
    const auto row = branch_input(set, ds.sensors);
    for (std::size_t c = 0; c < row.size(); ++c)
      ds.branch_inputs(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = row[c];
    ds.output_times[k] = grid.times();
    ds.targets[k] = curve.values;
    ds.target_stderr[k] = *curve.stderr;
    out.function_sets[k] = std::move(set);
    out.curves[k] = std::move(curve);
  });
  return out;
}

struct SampleComparison {
  std::vector<double> times;
  std::vector<double> reference;
  std::vector<double> predicted;
};

struct EvaluationReport {
  std::vector<std::pair<double, double>> scatter;  // (exact, predicted)
  double mse = 0.0;
  double r2 = 0.0;
  std::vector<SampleComparison> samples;
};

/// R^2 = 1 - SS_res / SS_tot over all pairs (NaN when the targets are constant).
inline double coefficient_of_determination(const std::vector<std::pair<double, double>>& pairs) {
  double mean = 0.0;
  for (const auto& [y, _] : pairs) mean += y;
  mean /= static_cast<double>(pairs.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (const auto& [y, yhat] : pairs) {
    ss_res += (y - yhat) * (y - yhat);
    ss_tot += (y - mean) * (y - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : std::numeric_limits<double>::quiet_NaN();
  return 1.0 - ss_res / ss_tot;
}

inline EvaluationReport evaluate(const DeepONetModel& model, const OperatorDataset& data) {
  const Eigen::VectorXd pred = predict_pairs(model, data);
  EvaluationReport report;
  report.scatter.reserve(data.n_pairs());
  Eigen::Index i = 0;
  double sq = 0.0;
  for (std::size_t k = 0; k < data.n_samples(); ++k) {
    SampleComparison cmp;
    cmp.times = data.output_times[k];
    cmp.reference = data.targets[k];
    for (double y : data.targets[k]) {
      const double yhat = pred(i++);
      report.scatter.emplace_back(y, yhat);
      cmp.predicted.push_back(yhat);
      sq += (y - yhat) * (y - yhat);
    }
    report.samples.push_back(std::move(cmp));
  }
  report.mse = sq / static_cast<double>(report.scatter.size());
  report.r2 = coefficient_of_determination(report.scatter);
  return report;
}

struct PathPrediction {
  RecoveryCurve curve;          // clamped to [0, 1]
  std::vector<double> raw;      // before clamping
  bool extrapolated = false;    // some grid time lies beyond the model's t_end
};

inline PathPrediction predict_recovery_path(const DeepONetModel& model, const RecoveryFunctionSet& set,
                                            const TimeGrid& grid) {
  if (model.sensors.empty()) throw ShapeError("model carries no sensor grid");
  if (set.n_systems() != model.n_systems)
    throw ShapeError("function set has " + std::to_string(set.n_systems()) + " systems, model expects " +
                     std::to_string(model.n_systems));
  const auto row = branch_input(set, model.sensors);
  const Eigen::Map<const Eigen::VectorXd> x(row.data(), static_cast<Eigen::Index>(row.size()));
  const Eigen::VectorXd b = model.branch.forward(x);
  Eigen::MatrixXd y(1, static_cast<Eigen::Index>(grid.size()));
  for (std::size_t g = 0; g < grid.size(); ++g) y(0, static_cast<Eigen::Index>(g)) = grid[g] / model.t_end;
  const Eigen::MatrixXd T = model.trunk.forward(y);

  PathPrediction out;
  out.curve.grid = grid;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double v = b.dot(T.col(static_cast<Eigen::Index>(g))) + model.b0;
    out.raw.push_back(v);
    out.curve.values.push_back(std::clamp(v, 0.0, 1.0));
    if (grid[g] > model.t_end * (1.0 + 1e-12)) out.extrapolated = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment artifacts

inline void write_dataset(const GeneratedData& data, DatasetRole role, const std::filesystem::path& dir) {
  const auto& ds = data.dataset;
  const std::string r(to_string(role));
  std::vector<std::string> header;
  for (std::size_t s = 0; s < ds.n_systems; ++s)
    for (std::size_t i = 0; i < ds.sensors.size(); ++i)
      header.push_back("sys" + std::to_string(s + 1) + "_u" + std::to_string(i + 1));
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < ds.n_samples(); ++k) {
    const Eigen::VectorXd row = ds.branch_inputs.row(static_cast<Eigen::Index>(k));
    rows.emplace_back(row.data(), row.data() + row.size());
  }
  io::write_rows_csv(dir / (r + "_branch.csv"), header, rows);

  std::vector<std::vector<double>> targets;
  for (std::size_t k = 0; k < ds.n_samples(); ++k)
    for (std::size_t i = 0; i < ds.targets[k].size(); ++i)
      targets.push_back({static_cast<double>(k), ds.output_times[k][i], ds.targets[k][i],
                         ds.target_stderr.empty() ? 0.0 : ds.target_stderr[k][i]});
  io::write_rows_csv(dir / (r + "_targets.csv"), {"sample", "time", "target", "stderr"}, targets);

  nlohmann::json sets = nlohmann::json::array();
  for (const auto& s : data.function_sets) sets.push_back(s);
  io::write_json(dir / (r + "_functions.json"), sets);
}

inline void write_dataset_manifest(const ExperimentConfig& cfg, const GeneratedData& train,
                                   const GeneratedData& test, const std::filesystem::path& dir) {
  nlohmann::json j;
  j["version"] = 1;
  j["mode"] = std::string(to_string(cfg.mode));
  j["seed"] = cfg.effective_seed();
  j["n_systems"] = cfg.n_systems;
  j["m"] = cfg.m;
  j["t_end"] = train.dataset.t_end;
  j["sensors"] = train.dataset.sensors;
  j["output_scheme"] = std::string(to_string(cfg.output_scheme));
  j["mc_realizations"] = cfg.mc_realizations;
  for (const auto* g : {&train, &test}) {
    const std::string r(g == &train ? "train" : "test");
    j["splits"][r] = {{"n_samples", g->dataset.n_samples()},
                      {"branch_file", r + "_branch.csv"},
                      {"targets_file", r + "_targets.csv"},
                      {"functions_file", r + "_functions.json"}};
  }
  io::write_json(dir / "dataset_manifest.json", j);
}

/// Reads one split written by write_dataset back into memory.
inline GeneratedData load_dataset(const std::filesystem::path& dir, DatasetRole role) {
  const auto manifest = io::read_json(dir / "dataset_manifest.json");
  const std::string r(to_string(role));
  GeneratedData out;
  auto& ds = out.dataset;
  try {
    ds.sensors = manifest.at("sensors").get<std::vector<double>>();
    ds.t_end = manifest.at("t_end").get<double>();
    ds.n_systems = manifest.at("n_systems").get<std::size_t>();
    const auto& split = manifest.at("splits").at(r);
    const auto branch = io::read_csv(dir / split.at("branch_file").get<std::string>());
    const auto targets = io::read_csv(dir / split.at("targets_file").get<std::string>());
    const auto n = split.at("n_samples").get<std::size_t>();
    if (branch.rows.size() != n) throw DataError(r + " branch file row count disagrees with the manifest");
    ds.branch_inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(branch.header.size()));
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t c = 0; c < branch.header.size(); ++c)
        ds.branch_inputs(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = branch.rows[k][c];
    ds.output_times.assign(n, {});
    ds.targets.assign(n, {});
    ds.target_stderr.assign(n, {});
    const auto cs = targets.column("sample"), ct = targets.column("time"), cy = targets.column("target"),
               ce = targets.column("stderr");
    for (const auto& row : targets.rows) {
      const auto k = static_cast<std::size_t>(row[cs]);
      if (k >= n) throw DataError(r + " targets reference an unknown sample");
      ds.output_times[k].push_back(row[ct]);
      ds.targets[k].push_back(row[cy]);
      ds.target_stderr[k].push_back(row[ce]);
    }
    for (const auto& s : io::read_json(dir / split.at("functions_file").get<std::string>())) {
      std::vector<RecoveryFunction> fs;
      for (const auto& f : s) fs.push_back(recovery_function_from_json(f));
      out.function_sets.emplace_back(std::move(fs));
    }
    for (std::size_t k = 0; k < n; ++k) {
      RecoveryCurve c{TimeGrid::from_times(ds.output_times[k]), ds.targets[k], ds.target_stderr[k]};
      out.curves.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed dataset manifest: ") + e.what());
  }
  ds.validate();
  return out;
}

inline void write_loss_history(const std::vector<LossRecord>& history, const std::filesystem::path& path) {
  std::vector<std::vector<double>> rows;
  for (const auto& r : history) rows.push_back({static_cast<double>(r.iteration), r.train_loss, r.test_loss});
  io::write_rows_csv(path, {"iteration", "train_loss", "test_loss"}, rows);
}

struct TestSummary {
  EvaluationReport report;
  std::vector<PathPrediction> paths;
  std::vector<double> path_max_abs_deviation;
};

/// Scores a model on a test split: pairwise metrics plus the recovery path
/// predicted from each function set compared with its MC reference curve.
inline TestSummary summarize_test(const DeepONetModel& model, const GeneratedData& test) {
  TestSummary s;
  s.report = evaluate(model, test.dataset);
  for (std::size_t k = 0; k < test.function_sets.size(); ++k) {
    auto path = predict_recovery_path(model, test.function_sets[k], test.curves[k].grid);
    double dev = 0.0;
    for (std::size_t g = 0; g < path.curve.values.size(); ++g)
      dev = std::max(dev, std::abs(path.curve.values[g] - test.curves[k].values[g]));
    s.path_max_abs_deviation.push_back(dev);
    s.paths.push_back(std::move(path));
  }
  return s;
}

inline nlohmann::json report_to_json(const ExperimentConfig& cfg, const TrainingResult* training,
                                     const TestSummary& summary) {
  nlohmann::json j;
  j["version"] = 1;
  j["mode"] = std::string(to_string(cfg.mode));
  j["seed"] = cfg.effective_seed();
  j["seed_override"] = cfg.seed_override ? nlohmann::json(*cfg.seed_override) : nlohmann::json(nullptr);
  j["n_train"] = cfg.n_train;
  j["n_test"] = summary.report.samples.size();
  j["n_pairs"] = summary.report.scatter.size();
  j["test_mse"] = summary.report.mse;
  j["test_r2"] = summary.report.r2;
  double worst = 0.0;
  bool extrapolated = false;
  for (std::size_t k = 0; k < summary.paths.size(); ++k) {
    worst = std::max(worst, summary.path_max_abs_deviation[k]);
    extrapolated = extrapolated || summary.paths[k].extrapolated;
  }
  j["max_abs_path_deviation"] = worst;
  j["path_max_abs_deviation"] = summary.path_max_abs_deviation;
  j["extrapolation_warning"] = extrapolated;
  if (training && !training->history.empty()) {
    const auto& last = training->history.back();
    j["iterations"] = last.iteration;
    j["final_train_loss"] = last.train_loss;
    j["final_test_loss"] = last.test_loss;
    j["best_train_loss"] = last.best_train_loss;
    j["best_iteration"] = training->best_iteration;
  }
  return j;
}

inline void write_test_artifacts(const ExperimentConfig& cfg, const TrainingResult* training,
                                 const TestSummary& summary, const std::filesystem::path& dir) {
  io::write_json(dir / "report.json", report_to_json(cfg, training, summary));
  std::vector<std::vector<double>> scatter;
  for (const auto& [y, yhat] : summary.report.scatter) scatter.push_back({y, yhat});
  io::write_rows_csv(dir / "scatter.csv", {"exact", "predicted"}, scatter);
  for (std::size_t k = 0; k < summary.paths.size(); ++k) {
    char name[40];
    std::snprintf(name, sizeof(name), "curve_%04zu.csv", k);
    io::write_columns_csv(dir / "curves" / name, {"time", "reference", "predicted"},
                          {summary.paths[k].curve.grid.times(), summary.report.samples[k].reference,
                           summary.paths[k].curve.values});
  }
}

struct ExperimentResult {
  GeneratedData train;
  GeneratedData test;
  TrainingResult training;
  TestSummary summary;
};

/// Builds both splits, trains, evaluates. When `dir` is given every artifact
/// is written there; a diverged run still leaves its datasets and history.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const std::optional<std::filesystem::path>& dir = std::nullopt) {
  cfg.validate();
  ExperimentResult res;
  res.train = generate_dataset(cfg, DatasetRole::train);
  res.test = generate_dataset(cfg, DatasetRole::test);
  if (dir) {
    write_dataset(res.train, DatasetRole::train, *dir);
    write_dataset(res.test, DatasetRole::test, *dir);
    write_dataset_manifest(cfg, res.train, res.test, *dir);
  }
  DeepONetModel model = init_model(cfg.network_shape(), model_seed(cfg.effective_seed()));
  model.sensors = res.train.dataset.sensors;
  model.t_end = res.train.dataset.t_end;
  TrainingConfig tcfg = cfg.training;
  try {
    res.training = train(std::move(model), res.train.dataset, &res.test.dataset, tcfg);
  } catch (const TrainingError& e) {
    if (dir) write_loss_history(e.history(), *dir / "loss_history.csv");
    throw;
  }
  res.summary = summarize_test(res.training.model, res.test);
  if (dir) {
    io::write_json(*dir / "model.json", checkpoint_to_json(res.training.model));
    write_loss_history(res.training.history, *dir / "loss_history.csv");
    write_test_artifacts(cfg, &res.training, res.summary, *dir);
  }
  return res;
}

}  // namespace sosrec
