// sosrec: simulate SoS recovery, solve the Markov-renewal equation and run
// the DeepONet experiments. Exit codes: 0 success, 1 runtime failure,
// 2 usage or configuration error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sosrec/config.hpp"
#include "sosrec/pipeline.hpp"
#include "sosrec/renewal_solver.hpp"

namespace fs = std::filesystem;
using namespace sosrec;

namespace {

struct Options {
  fs::path config;
  fs::path out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool quiet = false;
  std::string tag;
};

void note(const Options& o, const std::string& msg) {
  if (!o.quiet) std::cerr << msg << '\n';
}

void row(const Options& o, const char* label, const std::string& value) {
  if (!o.quiet) std::printf("  %-24s %s\n", label, value.c_str());
}

void row(const Options& o, const char* label, double value) { row(o, label, io::format_number(value)); }

void write_toml(const fs::path& path, const toml::table& table) {
  auto out = io::open_for_write(path);
  out << table << '\n';
}

void copy_config(const fs::path& from, const fs::path& to) {
  if (fs::exists(to) && fs::equivalent(from, to)) return;
  fs::copy_file(from, to, fs::copy_options::overwrite_existing);
}

ExperimentConfig experiment_config(const Options& o, bool allow_out_config) {
  fs::path path = o.config;
  if (path.empty() && allow_out_config) path = o.out / "config.toml";
  if (path.empty()) throw ConfigError("--config is required");
  ExperimentConfig cfg = config::load_experiment(path);
  if (o.seed) cfg.seed_override = *o.seed;
  if (o.threads) cfg.threads = *o.threads;
  return cfg;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Options& o) {
  const auto table = config::detail::parse_file(o.config);
  auto cfg = config::simulate_from_toml(table);
  const std::uint64_t seed = o.seed.value_or(cfg.seed);
  if (o.threads) cfg.threads = *o.threads;

  std::vector<RecoveryFunctionSet> sets;
  if (cfg.systems) {
    sets.push_back(*cfg.systems);
  } else {
    auto gen = cfg.random->generator;
    gen.identical_mode = cfg.random->identical;
    for (std::size_t k = 0; k < cfg.random->n_sets; ++k) {
      Rng rng = make_child_rng(derive_seed(seed, 0), k);
      sets.push_back(sample_random_function_set(gen, cfg.random->n_systems, rng));
    }
  }
  const auto space = build_state_space(cfg.n_systems());
  const FunctionalityVector F = cfg.functionality ? FunctionalityVector{*cfg.functionality} : build_equal_impact_F(space);
  F.validate(space.size());
  const auto I = InitialStateVector::first_state(space.size());
  const auto grid = TimeGrid::uniform(cfg.horizon(), cfg.n_points);

  fs::create_directories(o.out);
  copy_config(o.config, o.out / "config.toml");
  nlohmann::json manifest{{"version", 1},
                          {"seed", seed},
                          {"seed_override", o.seed ? nlohmann::json(*o.seed) : nlohmann::json(nullptr)},
                          {"n_realizations", cfg.n_realizations},
                          {"t_end", grid.t_end()},
                          {"n_points", grid.size()},
                          {"functionality", F.values},
                          {"curves", nlohmann::json::array()}};
  if (!o.quiet) std::printf("  %-6s %-14s %-14s %s\n", "curve", "F(t_end)", "stderr", "file");
  for (std::size_t k = 0; k < sets.size(); ++k) {
    const auto curve = estimate_recovery_curve_mc(sets[k], space, F, I, grid, cfg.n_realizations,
                                                  derive_seed(derive_seed(seed, 1), k), cfg.threads);
    std::vector<std::string> header{"time", "value", "stderr"};
    std::vector<std::vector<double>> columns{grid.times(), curve.values, *curve.stderr};
    if (cfg.exact) {
      header.push_back("exact");
      columns.push_back(exact_recovery_curve_independent(sets[k], space, F, grid).values);
    }
    char name[32];
    std::snprintf(name, sizeof(name), "curve_%04zu.csv", k);
    io::write_columns_csv(o.out / name, header, columns);
    manifest["curves"].push_back({{"file", name}, {"functions", sets[k]}});
    if (!o.quiet)
      std::printf("  %-6zu %-14s %-14s %s\n", k, io::format_number(curve.values.back()).c_str(),
                  io::format_number(curve.stderr->back()).c_str(), name);
  }
  io::write_json(o.out / "simulate_manifest.json", manifest);
  return 0;
}

int cmd_solve(const Options& o) {
  const auto table = config::detail::parse_file(o.config);
  auto cfg = config::solve_from_toml(table, o.config.parent_path());
  if (o.threads) cfg.threads = *o.threads;
  const std::uint64_t seed = o.seed.value_or(cfg.seed);

  KernelMatrix phi;
  FunctionalityVector F;
  if (cfg.kernel == config::KernelSource::clock_reset) {
    const auto space = build_state_space(cfg.systems->n_systems());
    phi = build_kernel_clock_reset(*cfg.systems, space);
    F = build_equal_impact_F(space);
  } else {
    if (!fs::is_regular_file(cfg.kernel_file)) throw ConfigError("kernel file not found: " + cfg.kernel_file.string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(std::ifstream(cfg.kernel_file));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("cannot parse kernel file: " + std::string(e.what()));
    }
    phi = kernel_from_json(j);
    const std::size_t n = phi.n_states();
    F.values.resize(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) F.values[i] = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
  }
  const std::size_t n_states = phi.n_states();
  if (cfg.functionality) F.values = *cfg.functionality;
  F.validate(n_states);
  InitialStateVector I = InitialStateVector::first_state(n_states);
  if (cfg.initial) I.probs = *cfg.initial;
  I.validate(n_states);
  phi.validate_masses();
  const auto grid = TimeGrid::with_step(cfg.t_end, cfg.dt);
  const auto export_times = cfg.export_times.empty() ? std::vector<double>{cfg.t_end} : cfg.export_times;

  note(o, "solving the Markov-renewal equation on " + std::to_string(grid.size()) + " grid points");
  const auto R = solve_markov_renewal(phi, grid);
  const auto curve = assemble_functionality(I, R, F);

  fs::create_directories(o.out);
  copy_config(o.config, o.out / "config.toml");
  export_transition_matrix(R, export_times, o.out);
  std::vector<std::string> header{"time", "value"};
  std::vector<std::vector<double>> columns{grid.times(), curve.values};
  if (cfg.mc_check > 0) {
    note(o, "estimating R(t) from " + std::to_string(cfg.mc_check) + " paths per start state");
    const auto mc = estimate_R_mc(phi, grid, cfg.mc_check, seed, cfg.threads);
    export_transition_matrix(mc, export_times, o.out / "mc");
    header.push_back("mc_value");
    columns.push_back(assemble_functionality(I, mc, F).values);
  }
  io::write_columns_csv(o.out / "curve.csv", header, columns);

  row(o, "states", std::to_string(n_states));
  row(o, "dt", grid.step());
  row(o, "max row-sum deviation", R.max_row_sum_deviation);
  row(o, "max clamp violation", R.max_clamp_violation);
  for (double t : export_times) {
    const std::size_t g = grid.nearest_index(t);
    row(o, ("F(" + io::format_number(grid[g]) + ")").c_str(), curve.values[g]);
  }
  return 0;
}

void print_data_summary(const Options& o, const GeneratedData& train, const GeneratedData& test) {
  row(o, "train samples", std::to_string(train.dataset.n_samples()));
  row(o, "test samples", std::to_string(test.dataset.n_samples()));
  row(o, "train pairs", std::to_string(train.dataset.n_pairs()));
  row(o, "test pairs", std::to_string(test.dataset.n_pairs()));
  row(o, "t_end", train.dataset.t_end);
}

void print_training_summary(const Options& o, const TrainingResult& r) {
  const auto& last = r.history.back();
  row(o, "iterations", std::to_string(last.iteration));
  row(o, "initial train loss", r.history.front().train_loss);
  row(o, "final train loss", last.train_loss);
  row(o, "final test loss", last.test_loss);
  row(o, "best train loss", last.best_train_loss);
  row(o, "best iteration", std::to_string(r.best_iteration));
}

void print_test_summary(const Options& o, const TestSummary& s) {
  double worst = 0.0;
  for (double d : s.path_max_abs_deviation) worst = std::max(worst, d);
  row(o, "test MSE", s.report.mse);
  row(o, "test R^2", s.report.r2);
  row(o, "max path deviation", worst);
}

int cmd_gen_data(const Options& o) {
  const auto cfg = experiment_config(o, false);
  note(o, "generating datasets");
  const auto train = generate_dataset(cfg, DatasetRole::train);
  const auto test = generate_dataset(cfg, DatasetRole::test);
  fs::create_directories(o.out);
  write_toml(o.out / "config.toml", config::experiment_to_toml(cfg));
  write_dataset(train, DatasetRole::train, o.out);
  write_dataset(test, DatasetRole::test, o.out);
  write_dataset_manifest(cfg, train, test, o.out);
  print_data_summary(o, train, test);
  return 0;
}

void require_file(const fs::path& path, const std::string& hint) {
  if (!fs::is_regular_file(path)) throw ConfigError(path.string() + " not found; " + hint);
}

int cmd_train(const Options& o) {
  const auto cfg = experiment_config(o, true);
  require_file(o.out / "dataset_manifest.json", "run gen-data first");
  const auto train_data = load_dataset(o.out, DatasetRole::train);
  const auto test_data = load_dataset(o.out, DatasetRole::test);
  if (train_data.dataset.n_systems != cfg.n_systems || train_data.dataset.sensors.size() != cfg.m)
    throw ConfigError("config does not match the dataset in " + o.out.string());

  DeepONetModel model = init_model(cfg.network_shape(), model_seed(cfg.effective_seed()));
  model.sensors = train_data.dataset.sensors;
  model.t_end = train_data.dataset.t_end;
  note(o, "training for " + std::to_string(cfg.training.iterations) + " iterations");
  TrainingResult result;
  try {
    result = train(std::move(model), train_data.dataset, &test_data.dataset, cfg.training);
  } catch (const TrainingError& e) {
    write_loss_history(e.history(), o.out / "loss_history.csv");
    throw;
  }
  io::write_json(o.out / "model.json", checkpoint_to_json(result.model));
  write_loss_history(result.history, o.out / "loss_history.csv");
  print_training_summary(o, result);
  return 0;
}

int cmd_eval(const Options& o) {
  const auto cfg = experiment_config(o, true);
  require_file(o.out / "model.json", "run train first");
  require_file(o.out / "dataset_manifest.json", "run gen-data first");
  const auto model = checkpoint_from_json(io::read_json(o.out / "model.json"));
  const auto test = load_dataset(o.out, DatasetRole::test);
  const auto summary = summarize_test(model, test);
  write_test_artifacts(cfg, nullptr, summary, o.out);
  print_test_summary(o, summary);
  return 0;
}

int cmd_reproduce(const Options& o) {
  const ExperimentMode mode = parse_mode(o.tag);
  ExperimentConfig cfg;
  if (!o.config.empty()) {
    cfg = config::load_experiment(o.config);
    if (cfg.mode != mode) throw ConfigError("config mode does not match the reproduce tag '" + o.tag + "'");
  } else {
    cfg = mode == ExperimentMode::identical ? ExperimentConfig::identical_default()
                                            : ExperimentConfig::disparate_default();
  }
  if (o.seed) cfg.seed_override = *o.seed;
  if (o.threads) cfg.threads = *o.threads;
  cfg.validate();

  fs::create_directories(o.out);
  write_toml(o.out / "config.toml", config::experiment_to_toml(cfg));
  note(o, "running the " + o.tag + " experiment (" + std::to_string(cfg.n_train) + " train / " +
              std::to_string(cfg.n_test) + " test, " + std::to_string(cfg.training.iterations) + " iterations)");
  const auto res = run_experiment(cfg, o.out);
  print_data_summary(o, res.train, res.test);
  print_training_summary(o, res.training);
  print_test_summary(o, res.summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"System-of-systems recovery: simulation, Markov-renewal solver and DeepONet surrogate"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", o.config, "TOML configuration file");
    if (config_required) c->required();
    sub->add_option("--out", o.out, "output directory")->required();
    sub->add_option("--seed", o.seed, "master seed override (recorded in the outputs)");
    sub->add_option("--threads", o.threads, "worker thread cap; results do not depend on it")
        ->check(CLI::Range(1u, 1024u));
    sub->add_flag("--quiet", o.quiet, "suppress progress and summary output");
  };

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo SoS recovery curves");
  common(simulate, true);
  auto* solve = app.add_subcommand("solve", "solve the Markov-renewal equation for R(t)");
  common(solve, true);
  auto* gen = app.add_subcommand("gen-data", "generate train/test datasets");
  common(gen, true);
  auto* tr = app.add_subcommand("train", "train a DeepONet on a generated dataset");
  common(tr, false);
  auto* ev = app.add_subcommand("eval", "evaluate a trained model on the test split");
  common(ev, false);
  auto* rep = app.add_subcommand("reproduce", "run a full experiment end to end");
  rep->add_option("tag", o.tag, "identical or disparate")->required()->check(CLI::IsMember({"identical", "disparate"}));
  common(rep, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*simulate) return cmd_simulate(o);
    if (*solve) return cmd_solve(o);
    if (*gen) return cmd_gen_data(o);
    if (*tr) return cmd_train(o);
    if (*ev) return cmd_eval(o);
    if (*rep) return cmd_reproduce(o);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
