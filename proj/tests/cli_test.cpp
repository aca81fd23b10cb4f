#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "sosrec/io.hpp"

namespace {

namespace fs = std::filesystem;

const fs::path kRoot = fs::temp_directory_path() / "sosrec_cli_test";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path write_file(const std::string& name, const std::string& text) {
  const auto path = kRoot / "inputs" / name;
  fs::create_directories(path.parent_path());
  std::ofstream(path) << text;
  return path;
}

struct Run {
  int code;
  std::string err;
};

Run sosrec(const std::string& args) {
  fs::create_directories(kRoot);
  const auto err = kRoot / "stderr.txt";
  const std::string cmd = std::string(SOSREC_CLI_PATH) + " " + args + " > /dev/null 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

fs::path out_dir(const std::string& name) {
  const auto dir = kRoot / name;
  fs::remove_all(dir);
  return dir;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return files;
}

const char* kWeibullSim = R"(
seed = 4
n_realizations = 20000
t_end = 2.0
n_points = 21

[[systems]]
family = "weibull"
shape = 1.0
scale = 1.0
count = 4
)";

const char* kSmokeExperiment = R"(
mode = "disparate"
seed = 7

[data]
n_systems = 3
n_train = 3
n_test = 2
m = 8
n_output_times = 10
mc_realizations = 300

[network]
p = 4
hidden = [8]

[training]
iterations = 150
record_every = 50
)";

TEST(Usage, ExitCodes) {
  EXPECT_EQ(sosrec("").code, 2);
  EXPECT_EQ(sosrec("frobnicate").code, 2);
  EXPECT_EQ(sosrec("--help").code, 0);
  EXPECT_EQ(sosrec("simulate --out " + (kRoot / "x").string()).code, 2);
  EXPECT_EQ(sosrec("reproduce sideways --out " + (kRoot / "x").string()).code, 2);
  EXPECT_EQ(sosrec("simulate --config a.toml --out b --threads 0").code, 2);
}

TEST(Usage, MissingConfigLeavesNoOutput) {
  const auto out = out_dir("missing");
  const auto r = sosrec("simulate --config " + (kRoot / "does_not_exist.toml").string() + " --out " + out.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("not found"), std::string::npos);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Usage, InvalidConfigLeavesNoOutput) {
  const auto out = out_dir("invalid");
  const auto bad_key = write_file("bad_key.toml", "mode = \"identical\"\n[data]\nn_trian = 3\n");
  auto r = sosrec("gen-data --config " + bad_key.string() + " --out " + out.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("data.n_trian"), std::string::npos);
  const auto bad_value = write_file("bad_value.toml", "[[systems]]\nfamily = \"weibull\"\nshape = -1.0\nscale = 1.0\n");
  r = sosrec("simulate --config " + bad_value.string() + " --out " + out.string());
  EXPECT_EQ(r.code, 2);
  const auto bad_syntax = write_file("bad_syntax.toml", "seed = = 3\n");
  EXPECT_EQ(sosrec("reproduce identical --config " + bad_syntax.string() + " --out " + out.string()).code, 2);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Simulate, WeibullCurveMatchesLinearityOracle) {
  const auto out = out_dir("sim");
  ASSERT_EQ(sosrec("simulate --config " + write_file("sim.toml", kWeibullSim).string() + " --out " + out.string()).code, 0);
  const auto table = sosrec::io::read_csv(out / "curve_0000.csv");
  EXPECT_EQ(table.header, (std::vector<std::string>{"time", "value", "stderr"}));
  const auto& at1 = table.rows[10];
  ASSERT_EQ(at1[0], 1.0);
  EXPECT_LE(std::abs(at1[1] - (1.0 - std::exp(-1.0))), 4.0 * at1[2]);
  EXPECT_TRUE(fs::exists(out / "simulate_manifest.json"));
  EXPECT_TRUE(fs::exists(out / "config.toml"));
}

TEST(Simulate, SingleRealizationIsAStepFunction) {
  const auto out = out_dir("sim_one");
  std::string cfg = kWeibullSim;
  cfg.replace(cfg.find("20000"), 5, "1");
  ASSERT_EQ(sosrec("simulate --config " + write_file("sim_one.toml", cfg).string() + " --out " + out.string()).code, 0);
  const auto table = sosrec::io::read_csv(out / "curve_0000.csv");
  double prev = 0.0;
  for (const auto& row : table.rows) {
    EXPECT_DOUBLE_EQ(4.0 * row[1], std::round(4.0 * row[1]));
    EXPECT_GE(row[1], prev);
    EXPECT_EQ(row[2], 0.0);
    prev = row[1];
  }
}

TEST(Solve, TwoStateExponentialBenchmark) {
  write_file("two_state.json", R"({"version": 1, "n_states": 2, "entries": [
    {"from": 1, "to": 2, "function": {"family": "weibull", "params": {"shape": 1.0, "scale": 1.0}}}]})");
  const auto cfg = write_file("bench.toml", "t_end = 1.0\ndt = 0.01\n[kernel]\ntype = \"file\"\npath = \"two_state.json\"\n");
  const auto out = out_dir("bench");
  ASSERT_EQ(sosrec("solve --config " + cfg.string() + " --out " + out.string()).code, 0);
  const auto R = sosrec::io::read_csv(out / "R_0000.csv");
  EXPECT_EQ(R.header, (std::vector<std::string>{"s1", "s2"}));
  EXPECT_NEAR(R.rows[0][0], 0.36788, 1e-3);
  EXPECT_EQ(R.rows[1][1], 1.0);
  const auto manifest = sosrec::io::read_json(out / "R_manifest.json");
  EXPECT_EQ(manifest.at("slices")[0].at("time").get<double>(), 1.0);
  EXPECT_TRUE(fs::exists(out / "curve.csv"));
}

TEST(Solve, ZeroKernelGivesIdentity) {
  write_file("zero.json", R"({"version": 1, "n_states": 3, "entries": []})");
  const auto cfg = write_file("zero.toml",
                              "t_end = 2.0\ndt = 0.1\nexport_times = [0.0, 1.0, 2.0]\n"
                              "[kernel]\ntype = \"file\"\npath = \"zero.json\"\n");
  const auto out = out_dir("zero");
  ASSERT_EQ(sosrec("solve --config " + cfg.string() + " --out " + out.string()).code, 0);
  for (const char* f : {"R_0000.csv", "R_0001.csv", "R_0002.csv"}) {
    const auto R = sosrec::io::read_csv(out / f);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(R.rows[i][j], i == j ? 1.0 : 0.0);
  }
}

TEST(Solve, OverfullKernelRowFailsWithRowIndex) {
  write_file("overfull.json", R"({"version": 1, "n_states": 3, "entries": [
    {"from": 2, "to": 1, "mass": 0.7, "function": {"family": "weibull", "params": {"shape": 1.0, "scale": 1.0}}},
    {"from": 2, "to": 3, "mass": 0.6, "function": {"family": "weibull", "params": {"shape": 2.0, "scale": 1.0}}}]})");
  const auto cfg = write_file("overfull.toml", "[kernel]\ntype = \"file\"\npath = \"overfull.json\"\n");
  const auto out = out_dir("overfull");
  const auto r = sosrec("solve --config " + cfg.string() + " --out " + out.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("row 2"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(out));
}

TEST(Pipeline, StagedCommandsMatchReproduce) {
  const auto cfg = write_file("smoke.toml", kSmokeExperiment).string();
  const auto staged = out_dir("staged"), full = out_dir("full");
  ASSERT_EQ(sosrec("gen-data --config " + cfg + " --out " + staged.string()).code, 0);
  ASSERT_EQ(sosrec("train --out " + staged.string()).code, 0);
  ASSERT_EQ(sosrec("eval --out " + staged.string()).code, 0);
  ASSERT_EQ(sosrec("reproduce disparate --config " + cfg + " --out " + full.string()).code, 0);
  const auto a = snapshot(staged), b = snapshot(full);
  for (const char* f : {"model.json", "loss_history.csv", "scatter.csv", "test_targets.csv", "curves/curve_0001.csv"})
    EXPECT_EQ(a.at(f), b.at(f)) << f;
  EXPECT_EQ(sosrec("reproduce identical --config " + cfg + " --out " + full.string()).code, 2);
}

TEST(Pipeline, TrainWithoutDataIsUsageError) {
  const auto cfg = write_file("smoke.toml", kSmokeExperiment).string();
  const auto out = out_dir("nodata");
  const auto r = sosrec("train --config " + cfg + " --out " + out.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("gen-data"), std::string::npos);
}

TEST(Pipeline, SeedOverrideIsRecorded) {
  const auto cfg = write_file("smoke.toml", kSmokeExperiment).string();
  const auto out = out_dir("override");
  ASSERT_EQ(sosrec("reproduce disparate --config " + cfg + " --seed 11 --out " + out.string()).code, 0);
  const auto report = sosrec::io::read_json(out / "report.json");
  EXPECT_EQ(report.at("seed").get<std::uint64_t>(), 11u);
  EXPECT_EQ(report.at("seed_override").get<std::uint64_t>(), 11u);
  EXPECT_NE(slurp(out / "config.toml").find("seed_override = 11"), std::string::npos);
}

TEST(Determinism, EveryCommandRerunsByteIdentical) {
  write_file("two_state.json", R"({"version": 1, "n_states": 2, "entries": [
    {"from": 1, "to": 2, "function": {"family": "weibull", "params": {"shape": 1.0, "scale": 1.0}}}]})");
  const auto solve_cfg = write_file("det_solve.toml",
                                    "t_end = 1.0\ndt = 0.01\nmc_check = 2000\n"
                                    "[kernel]\ntype = \"file\"\npath = \"two_state.json\"\n");
  const auto sim_cfg = write_file("det_sim.toml", kWeibullSim);
  const auto exp_cfg = write_file("det_exp.toml", kSmokeExperiment);
  const std::vector<std::string> commands{
      "simulate --config " + sim_cfg.string(),
      "solve --config " + solve_cfg.string(),
      "reproduce disparate --config " + exp_cfg.string(),
  };
  for (std::size_t c = 0; c < commands.size(); ++c) {
    const auto a = out_dir("det_a" + std::to_string(c)), b = out_dir("det_b" + std::to_string(c));
    ASSERT_EQ(sosrec(commands[c] + " --out " + a.string()).code, 0) << commands[c];
    ASSERT_EQ(sosrec(commands[c] + " --threads 3 --out " + b.string()).code, 0) << commands[c];
    EXPECT_EQ(snapshot(a), snapshot(b)) << commands[c];
  }
}

}  // namespace
