#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "sosrec/io.hpp"
#include "sosrec/recovery_models.hpp"

namespace sosrec {
namespace {

// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
template <typename Cdf>
double ks_statistic(std::vector<double> xs, Cdf cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

std::vector<RecoveryFunction> family_zoo() {
  return {RecoveryFunction::weibull(1.0, 1.0),  RecoveryFunction::weibull(2.5, 3.0),
          RecoveryFunction::weibull(0.7, 2.0),  RecoveryFunction::lognormal(2.0, 0.4),
          RecoveryFunction::lognormal(1.0, 1.2),
          RecoveryFunction::piecewise_linear({0.0, 1.0, 2.5, 4.0}, {0.0, 0.2, 0.9, 1.0})};
}

TEST(EvalCdf, ClosedFormValues) {
  const auto expo = RecoveryFunction::weibull(1.0, 1.0);
  EXPECT_EQ(eval_cdf(expo, 0.0), 0.0);
  EXPECT_NEAR(eval_cdf(expo, 1.0), 1.0 - std::exp(-1.0), 1e-15);
  EXPECT_NEAR(eval_cdf(expo, 1.0), 0.63212, 1e-5);
  const auto ramp = RecoveryFunction::piecewise_linear({0.0, 2.0}, {0.0, 1.0});
  EXPECT_DOUBLE_EQ(eval_cdf(ramp, 1.0), 0.5);
  EXPECT_EQ(eval_cdf(ramp, 2.0), 1.0);
  EXPECT_EQ(eval_cdf(ramp, 10.0), 1.0);
  EXPECT_DOUBLE_EQ(eval_cdf(RecoveryFunction::lognormal(3.0, 0.5), 3.0), 0.5);
}

TEST(EvalCdf, NegativeTimeIsDomainError) {
  for (const auto& f : family_zoo()) {
    EXPECT_THROW(eval_cdf(f, -1e-9), DomainError);
    EXPECT_THROW(eval_density(f, -1.0), DomainError);
  }
}

TEST(EvalDensity, ClosedFormValues) {
  const auto expo = RecoveryFunction::weibull(1.0, 1.0);
  EXPECT_DOUBLE_EQ(eval_density(expo, 0.0), 1.0);
  EXPECT_NEAR(eval_density(expo, 1.0), std::exp(-1.0), 1e-15);
  const auto ramp = RecoveryFunction::piecewise_linear({0.0, 2.0}, {0.0, 1.0});
  EXPECT_DOUBLE_EQ(eval_density(ramp, 1.0), 0.5);
}

TEST(EvalDensity, RightDerivativeAtKnots) {
  const auto f = RecoveryFunction::piecewise_linear({0.0, 1.0, 3.0}, {0.0, 0.5, 1.0});
  EXPECT_DOUBLE_EQ(f.density(1.0), 0.25);
  EXPECT_DOUBLE_EQ(f.density(0.0), 0.5);
  EXPECT_EQ(f.density(3.0), 0.0);
}

TEST(EvalDensity, MatchesCentralDifferenceOfCdf) {
  const std::vector<double> ts{0.3, 0.9, 1.7, 2.2, 3.3};
  for (const auto& f : family_zoo()) {
    for (double t : ts) {
      if (f.family() == Family::piecewise_linear && (t == 1.0 || t == 2.5)) continue;
      const double h = 1e-6 * std::max(1.0, t);
      const double fd = (f.cdf(t + h) - f.cdf(t - h)) / (2.0 * h);
      const double an = f.density(t);
      EXPECT_LE(std::abs(fd - an), 1e-4 * std::max(std::abs(an), 1e-3)) << to_string(f.family()) << " t=" << t;
    }
  }
}

TEST(EvalDensity, IntegratesBackToCdf) {
  for (const auto& f : family_zoo()) {
    if (f.family() == Family::weibull && std::get<Weibull>(f.params()).shape < 1.0) continue;  // unbounded at 0
    const double t_big = f.quantile(0.999);
    const std::size_t n = 200'000;
    const double h = t_big / static_cast<double>(n);
    double integral = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      integral += 0.5 * h * (f.density(h * static_cast<double>(i)) + f.density(h * static_cast<double>(i + 1)));
    EXPECT_NEAR(integral, f.cdf(t_big), 1e-3) << to_string(f.family());
  }
}

TEST(Invariants, MonotoneBoundedStartsAtZero) {
  for (const auto& f : family_zoo()) {
    EXPECT_EQ(f.cdf(0.0), 0.0);
    double prev = 0.0;
    for (int i = 0; i <= 2000; ++i) {
      const double v = f.cdf(0.005 * i);
      EXPECT_GE(v, prev);
      EXPECT_LE(v, 1.0);
      EXPECT_GE(f.density(0.005 * i), 0.0);
      prev = v;
    }
    EXPECT_NEAR(f.cdf(1e6), 1.0, 1e-9);
  }
}

TEST(Construction, RejectsInvalidParameters) {
  EXPECT_THROW(RecoveryFunction::lognormal(0.0, 1.0), ConfigError);
  EXPECT_THROW(RecoveryFunction::lognormal(1.0, -1.0), ConfigError);
  EXPECT_THROW(RecoveryFunction::weibull(1.0, 0.0), ConfigError);
  EXPECT_THROW(RecoveryFunction::piecewise_linear({0.0, 1.0}, {0.0, 0.9}), ConfigError);
  EXPECT_THROW(RecoveryFunction::piecewise_linear({0.0, 1.0}, {0.1, 1.0}), ConfigError);
  EXPECT_THROW(RecoveryFunction::piecewise_linear({1.0, 0.5}, {0.0, 1.0}), ConfigError);
  EXPECT_THROW(RecoveryFunction::piecewise_linear({0.0, 1.0, 2.0}, {0.0, 0.7, 0.6}), ConfigError);
}

TEST(SampleRecoveryTime, InverseTransformValues) {
  const auto expo = RecoveryFunction::weibull(1.0, 1.0);
  EXPECT_NEAR(expo.quantile(0.5), std::log(2.0), 1e-15);
  EXPECT_EQ(expo.quantile(0.0), 0.0);
  for (const auto& f : family_zoo()) {
    EXPECT_EQ(f.quantile(0.0), 0.0);
    for (double u : {0.1, 0.37, 0.5, 0.93})
      EXPECT_NEAR(f.cdf(f.quantile(u)), u, 1e-12) << to_string(f.family());
  }
}

TEST(SampleRecoveryTime, StepFunctionAtomIsExact) {
  const auto step = RecoveryFunction::piecewise_linear({0.0, 2.0, 2.0}, {0.0, 0.0, 1.0});
  EXPECT_EQ(step.cdf(1.999), 0.0);
  EXPECT_EQ(step.cdf(2.0), 1.0);
  for (double u : {1e-12, 0.5, 0.999}) EXPECT_EQ(step.quantile(u), 2.0);
}

TEST(SampleRecoveryTime, KolmogorovSmirnovAgainstCdf) {
  for (const auto& f : family_zoo()) {
    Rng rng = make_rng(12345);
    std::vector<double> xs(100'000);
    for (auto& x : xs) x = sample_recovery_time(f, rng);
    EXPECT_LT(ks_statistic(xs, [&](double t) { return f.cdf(t); }), 0.01) << to_string(f.family());
  }
}

TEST(SampleRecoveryTime, SameSeedSameDraws) {
  const auto f = RecoveryFunction::lognormal(2.0, 0.5);
  Rng a = make_rng(7), b = make_rng(7);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_recovery_time(f, a), sample_recovery_time(f, b));
}

TEST(RandomFunctionSet, IdenticalModeSharesOneDraw) {
  FunctionGeneratorConfig cfg;
  cfg.identical_mode = true;
  Rng rng = make_rng(1);
  const auto set = sample_random_function_set(cfg, 4, rng);
  ASSERT_EQ(set.n_systems(), 4u);
  for (std::size_t k = 1; k < 4; ++k) EXPECT_EQ(set[k], set[0]);
}

TEST(RandomFunctionSet, DisparateModeDiffersAndStaysInRange) {
  FunctionGeneratorConfig cfg;
  Rng rng = make_rng(2);
  const auto set = sample_random_function_set(cfg, 4, rng);
  bool differ = false;
  for (std::size_t k = 1; k < 4; ++k) differ = differ || !(set[k] == set[0]);
  EXPECT_TRUE(differ);
  for (const auto& f : set) {
    const auto& p = std::get<Lognormal>(f.params());
    EXPECT_GE(p.median, cfg.median.min);
    EXPECT_LE(p.median, cfg.median.max);
    EXPECT_GE(p.dispersion, cfg.dispersion.min);
    EXPECT_LE(p.dispersion, cfg.dispersion.max);
  }
}

TEST(RandomFunctionSet, DeterministicGivenSeed) {
  FunctionGeneratorConfig cfg;
  cfg.family = Family::weibull;
  Rng a = make_rng(99), b = make_rng(99);
  EXPECT_EQ(sample_random_function_set(cfg, 5, a), sample_random_function_set(cfg, 5, b));
}

TEST(RandomFunctionSet, InvalidRangesAreConfigErrors) {
  FunctionGeneratorConfig cfg;
  cfg.median = {3.0, 1.0};
  Rng rng = make_rng(0);
  EXPECT_THROW(sample_random_function_set(cfg, 2, rng), ConfigError);
  cfg = {};
  cfg.dispersion = {0.0, 1.0};
  EXPECT_THROW(sample_random_function_set(cfg, 2, rng), ConfigError);
  cfg = {};
  EXPECT_THROW(sample_random_function_set(cfg, 0, rng), ConfigError);
}

TEST(Serialization, JsonRoundTripPreservesEveryFamily) {
  for (const auto& f : family_zoo()) {
    const nlohmann::json j = f;
    EXPECT_EQ(j.at("family").get<std::string>(), std::string(to_string(f.family())));
    EXPECT_EQ(recovery_function_from_json(nlohmann::json::parse(j.dump())), f);
  }
  EXPECT_THROW(recovery_function_from_json(nlohmann::json{{"family", "gamma"}, {"params", {}}}), ConfigError);
  EXPECT_THROW(recovery_function_from_json(nlohmann::json{{"family", "weibull"}}), ConfigError);
}

TEST(Serialization, GridCsvHasHeader) {
  const auto f = RecoveryFunction::weibull(1.0, 1.0);
  const std::vector<double> ts{0.0, 0.5, 1.0};
  const auto path = std::filesystem::temp_directory_path() / "sosrec_grid_test.csv";
  io::write_columns_csv(path, {"time", "value"}, {ts, tabulate(f, ts)});
  const auto table = io::read_csv(path);
  ASSERT_EQ(table.header, (std::vector<std::string>{"time", "value"}));
  ASSERT_EQ(table.rows.size(), 3u);
  EXPECT_EQ(table.rows[2][1], f.cdf(1.0));
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace sosrec
