#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "kcm/experiments.hpp"

using namespace kcm;
namespace ex = kcm::experiments;

namespace {

bool has_level(const std::vector<ex::Finding>& fs, const std::string& level) {
  for (const auto& f : fs) {
    if (f.level == level) return true;
  }
  return false;
}

ex::ExperimentConfig small_velocity(double q) {
  ex::ExperimentConfig c;
  c.kind = ex::Kind::kVelocity;
  c.q = q;
  c.t = 50.0;
  c.n = 40;
  c.seed = 99;
  return c;
}

}  // namespace

TEST(Validate, Findings) {
  auto c = small_velocity(1.2);
  EXPECT_TRUE(ex::has_errors(ex::validate(c)));

  c.q = 0.8;
  auto fs = ex::validate(c);
  EXPECT_FALSE(ex::has_errors(fs));
  EXPECT_FALSE(has_level(fs, "warning"));

  c.q = 0.7;
  EXPECT_TRUE(has_level(ex::validate(c), "warning"));

  c.q = 0.9;
  c.seed.reset();
  fs = ex::validate(c);
  EXPECT_TRUE(has_level(fs, "note"));
  EXPECT_FALSE(ex::has_errors(fs));
  c.ci = true;
  EXPECT_TRUE(ex::has_errors(ex::validate(c)));

  c = small_velocity(0.9);
  c.probe_times = {60.0};
  EXPECT_TRUE(ex::has_errors(ex::validate(c)));
  c = small_velocity(0.9);
  c.init = "bernoulli:1.5";
  EXPECT_TRUE(ex::has_errors(ex::validate(c)));
}

TEST(Config, KindNamesRoundTrip) {
  for (const auto& k : ex::kKindNames) {
    ASSERT_TRUE(ex::parse_kind(k.name).has_value());
    EXPECT_EQ(*ex::parse_kind(k.name), k.kind);
    EXPECT_EQ(std::string(ex::to_string(k.kind)), k.name);
  }
  EXPECT_FALSE(ex::parse_kind("nonsense").has_value());
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  auto c = small_velocity(0.85);
  c.probe_times = {10.0, 20.0};
  const auto j = ex::config_json(c, 99);
  const auto back = ex::config_from_json(j);
  EXPECT_EQ(back.kind, c.kind);
  EXPECT_EQ(back.q, c.q);
  EXPECT_EQ(back.t, c.t);
  EXPECT_EQ(back.n, c.n);
  EXPECT_EQ(back.probe_times, c.probe_times);
  EXPECT_EQ(ex::config_json(back, 99).dump(), j.dump());

  auto bad = j;
  bad["p"] = 0.5;
  EXPECT_THROW(ex::config_from_json(bad), ex::ConfigError);
  bad = j;
  bad["no_such_option"] = 1;
  EXPECT_THROW(ex::config_from_json(bad), ex::ConfigError);
}

TEST(Config, ParseInit) {
  EXPECT_TRUE(std::holds_alternative<Delta0>(ex::parse_init("delta0", 0.9, 1)));
  const auto b = std::get<BernoulliRight>(ex::parse_init("bernoulli", 0.9, 1));
  EXPECT_NEAR(b.p, 0.1, 1e-15);
  EXPECT_NEAR(std::get<BernoulliRight>(ex::parse_init("bernoulli:0.3", 0.9, 1)).p, 0.3, 1e-15);
  EXPECT_EQ(std::get<ExplicitPattern>(ex::parse_init("pattern:0110", 0.9, 1)).bits, "0110");
  EXPECT_THROW(ex::parse_init("gaussian", 0.9, 1), ex::ConfigError);
}

TEST(Run, InvalidConfigExitCode) {
  auto c = small_velocity(1.5);
  const auto out = ex::run(c);
  EXPECT_EQ(out.exit_code, 2);
  EXPECT_EQ(out.summary["status"], "invalid-config");
}

TEST(Run, SummaryIsReproducible) {
  const auto c = small_velocity(0.9);
  const auto a = ex::run(c), b = ex::run(c);
  ASSERT_EQ(a.exit_code, 0);
  EXPECT_EQ(a.summary.dump(), b.summary.dump());

  const auto dir = std::filesystem::temp_directory_path() / "kcm_test_summary";
  std::filesystem::remove_all(dir);
  ex::write_output(a, dir / "a");
  ex::write_output(b, dir / "b");
  auto load = [](const std::filesystem::path& p) {
    std::ifstream in(p / "summary.json");
    auto j = ex::json::parse(in);
    EXPECT_TRUE(j.contains("generated"));
    j.erase("generated");
    return j.dump();
  };
  EXPECT_EQ(load(dir / "a"), load(dir / "b"));
  EXPECT_TRUE(std::filesystem::exists(dir / "a" / "runs.csv"));
  std::filesystem::remove_all(dir);
}

TEST(Run, FrontSpeedAtQOne) {
  auto c = small_velocity(1.0);
  c.t = 100.0;
  c.n = 200;
  const auto out = ex::run(c);
  ASSERT_EQ(out.exit_code, 0);
  const double v = out.summary["results"]["v_hat"]["value"];
  const double se = out.summary["results"]["v_hat"]["stderr"];
  EXPECT_NEAR(v, -1.0, 4.0 * se);
  EXPECT_NEAR(se, std::sqrt(1.0 / (100.0 * 200)), 0.003);
}

TEST(Ensemble, IndependentOfWorkerCount) {
  auto c = small_velocity(0.9);
  c.init = "bernoulli";
  const auto spec = ex::front_spec(c, 5);
  const auto one = ex::run_front_ensemble(spec, 12, 1);
  const auto many = ex::run_front_ensemble(spec, 12, 3);
  ASSERT_EQ(one.size(), many.size());
  for (std::size_t i = 0; i < one.size(); ++i) EXPECT_TRUE(ex::same_record(one[i], many[i])) << "run " << i;
}

TEST(Determinism, SmallCheckIsClean) {
  const auto rep = ex::check_determinism(0.9, ex::parse_init("bernoulli", 0.9, 3), 20.0, 5, 3, 2, 11, {});
  EXPECT_EQ(rep.seeds, 5u);
  EXPECT_EQ(rep.worker_mismatches, 0u);
  EXPECT_EQ(rep.live_set_mismatches, 0u);
  EXPECT_EQ(rep.shift_mismatches, 0u);
}

TEST(Oracle, SweepIsExact) {
  for (const auto& row : ex::oracle_sweep(5, {0.5, 0.9})) {
    EXPECT_LT(row.detailed_balance, 1e-12);
    EXPECT_LT(row.stationarity, 1e-12);
  }
}
