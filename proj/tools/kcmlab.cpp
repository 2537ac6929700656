// kcmlab: command-line driver for the FA-1f / contact-process experiments.
//
//   kcmlab <experiment> [--config file.json] [--q Q] [--t T] [--n N] [--seed S]
//          [--init delta0|bernoulli[:p]|pattern:<bits>] [--out DIR]
//          [--workers W] [--live-set on|off] [experiment options]
//
// Flags override values read from --config. Without --out the summary is
// printed to stdout.

#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "kcm/experiments.hpp"

namespace ex = kcm::experiments;

namespace {

struct Flags {
  std::string config_path;
  std::optional<double> q, t;
  std::optional<std::int64_t> n;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> init, out, live_set, model;
  std::optional<unsigned> workers;
  std::optional<std::vector<double>> probe_times;
  std::optional<int> width;
  bool ci = false;
  bool validate_only = false;
  bool dump = false;
  std::optional<double> theta, pool_spacing, oracle_time, c_left, c_right;
  std::optional<std::int64_t> box_half, reference_n, margin, covariance_index, max_lag;
  std::optional<std::vector<std::int64_t>> gap_lengths;
  std::optional<int> max_restarts, oracle_sites;
  bool horizon_sensitivity = false;
};

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config_path, "JSON config file")->check(CLI::ExistingFile);
  sub->add_option("--q", f.q, "rate of updates to 0 (p = 1 - q)");
  sub->add_option("--t", f.t, "time horizon");
  sub->add_option("--n", f.n, "ensemble size");
  sub->add_option("--seed", f.seed, "64-bit seed");
  sub->add_option("--init", f.init, "delta0 | bernoulli[:p] | pattern:<bits>");
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--workers", f.workers, "worker threads");
  sub->add_option("--live-set", f.live_set, "on | off")->check(CLI::IsMember({"on", "off"}));
  sub->add_option("--probe-times", f.probe_times, "probe times")->delimiter(',');
  sub->add_option("--width", f.width, "pattern width behind the front");
  sub->add_option("--c-left", f.c_left, "window safety speed to the left");
  sub->add_option("--c-right", f.c_right, "window safety speed to the right");
  sub->add_option("--margin", f.margin, "sentinel margin");
  sub->add_flag("--ci", f.ci, "CI mode: a seed is mandatory");
  sub->add_flag("--validate", f.validate_only, "only validate the configuration");
}

ex::ExperimentConfig apply(const Flags& f, ex::ExperimentConfig c) {
  if (f.q) c.q = *f.q;
  if (f.t) c.t = *f.t;
  if (f.n) c.n = *f.n;
  if (f.seed) c.seed = *f.seed;
  if (f.init) c.init = *f.init;
  if (f.out) c.out_dir = *f.out;
  if (f.workers) c.workers = *f.workers;
  if (f.live_set) c.live_set = *f.live_set == "on";
  if (f.model) c.model = *f.model;
  if (f.probe_times) c.probe_times = *f.probe_times;
  if (f.width) c.pattern_width = *f.width;
  if (f.c_left) c.window.c_left = *f.c_left;
  if (f.c_right) c.window.c_right = *f.c_right;
  if (f.margin) c.window.margin = *f.margin;
  if (f.ci) c.ci = true;
  if (f.dump) c.dump_trajectory = true;
  if (f.theta) c.theta = *f.theta;
  if (f.box_half) c.box_half = *f.box_half;
  if (f.pool_spacing) c.pool_spacing = *f.pool_spacing;
  if (f.reference_n) c.reference_n = *f.reference_n;
  if (f.covariance_index) c.covariance_index = *f.covariance_index;
  if (f.max_lag) c.max_lag = *f.max_lag;
  if (f.gap_lengths) c.gap_lengths = *f.gap_lengths;
  if (f.max_restarts) c.max_restarts = *f.max_restarts;
  if (f.horizon_sensitivity) c.horizon_sensitivity = true;
  if (f.oracle_sites) c.oracle_sites = *f.oracle_sites;
  if (f.oracle_time) c.oracle_time = *f.oracle_time;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo laboratory for the FA-1f model and the threshold contact process"};
  app.require_subcommand(1);
  Flags f;
  for (const auto& k : ex::kKindNames) {
    auto* sub = app.add_subcommand(k.name);
    add_common(sub, f);
    switch (k.kind) {
      case ex::Kind::kSimulate:
        sub->add_option("--model", f.model, "fa1f | tcp")->check(CLI::IsMember({"fa1f", "tcp"}));
        sub->add_flag("--dump-trajectory", f.dump, "write trajectory.csv for run 0");
        break;
      case ex::Kind::kClt:
        sub->add_option("--cov-index", f.covariance_index, "j in Cov(xi_j, xi_{j+k})");
        sub->add_option("--max-lag", f.max_lag, "largest lag k");
        break;
      case ex::Kind::kInvariantMeasure:
        sub->add_option("--reference-n", f.reference_n, "size of the Bernoulli-start ensemble");
        sub->add_option("--pool-spacing", f.pool_spacing, "time between pooled samples of one path");
        break;
      case ex::Kind::kGapStats:
        sub->add_option("--lengths", f.gap_lengths, "gap lengths l")->delimiter(',');
        break;
      case ex::Kind::kDriftDiagnostic:
        sub->add_option("--theta", f.theta, "theta > 1");
        sub->add_option("--box-half", f.box_half, "box [-h, h]");
        break;
      case ex::Kind::kRestart:
        sub->add_option("--max-restarts", f.max_restarts, "restart cap");
        sub->add_flag("--horizon-sensitivity", f.horizon_sensitivity, "repeat at half the horizon");
        break;
      case ex::Kind::kOracleCheck:
        sub->add_option("--sites", f.oracle_sites, "box size for the Monte Carlo comparison");
        sub->add_option("--oracle-time", f.oracle_time, "comparison time");
        break;
      default:
        break;
    }
  }
  CLI11_PARSE(app, argc, argv);

  const std::string name = app.get_subcommands().front()->get_name();
  ex::ExperimentConfig config;
  config.kind = *ex::parse_kind(name);
  try {
    if (!f.config_path.empty()) {
      std::ifstream in(f.config_path);
      const auto j = ex::json::parse(in);
      config = ex::config_from_json(j, config);
      if (j.contains("experiment") && config.kind != *ex::parse_kind(name)) {
        std::cerr << "config file is for experiment '" << ex::to_string(config.kind) << "'\n";
        return 2;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "bad config: " << e.what() << '\n';
    return 2;
  }
  config = apply(f, config);

  const auto findings = ex::validate(config);
  for (const auto& fd : findings) std::cerr << fd.level << ": " << fd.message << '\n';
  if (f.validate_only) return ex::has_errors(findings) ? 2 : 0;

  const auto out = ex::run(config);
  if (out.exit_code == 0 && !config.out_dir.empty()) {
    ex::write_output(out, config.out_dir);
    std::cerr << "wrote " << config.out_dir << "/summary.json\n";
  } else {
    std::cout << out.summary.dump(2) << '\n';
  }
  if (out.summary.contains("error")) std::cerr << "error: " << out.summary["error"].get<std::string>() << '\n';
  return out.exit_code;
}
