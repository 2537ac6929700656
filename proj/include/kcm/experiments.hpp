#pragma once

// Experiment drivers shared by the kcmlab command line and the acceptance
// suite. Each experiment takes an ExperimentConfig and returns a summary
// (JSON) plus CSV tables; nothing here touches the filesystem except
// write_output().

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kcm/dynamics.hpp"
#include "kcm/ensemble.hpp"
#include "kcm/estimators.hpp"
#include "kcm/lattice.hpp"
#include "kcm/oracle.hpp"
#include "kcm/randomness.hpp"
#include "kcm/restart.hpp"

namespace kcm::experiments {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

enum class Kind {
  kSimulate,
  kVelocity,
  kClt,
  kInvariantMeasure,
  kContactSurvival,
  kRestart,
  kOracleCheck,
  kGapStats,
  kDriftDiagnostic,
  kCoupling,
  kDeterminism,
};

struct KindName {
  Kind kind;
  const char* name;
};

inline constexpr KindName kKindNames[] = {
    {Kind::kSimulate, "simulate"},
    {Kind::kVelocity, "velocity"},
    {Kind::kClt, "clt"},
    {Kind::kInvariantMeasure, "invariant-measure"},
    {Kind::kContactSurvival, "contact-survival"},
    {Kind::kRestart, "restart"},
    {Kind::kOracleCheck, "oracle-check"},
    {Kind::kGapStats, "gap-stats"},
    {Kind::kDriftDiagnostic, "drift-diagnostic"},
    {Kind::kCoupling, "coupling"},
    {Kind::kDeterminism, "determinism"},
};

inline const char* to_string(Kind k) {
  for (const auto& e : kKindNames) {
    if (e.kind == k) return e.name;
  }
  return "?";
}

inline std::optional<Kind> parse_kind(const std::string& s) {
  for (const auto& e : kKindNames) {
    if (s == e.name) return e.kind;
  }
  return std::nullopt;
}

struct ExperimentConfig {
  Kind kind = Kind::kSimulate;
  double q = 0.9;
  std::string model = "fa1f";  ///< simulate only: fa1f | tcp
  std::string init = "delta0";  ///< delta0 | bernoulli[:p] | pattern:<bits>
  double t = 100.0;
  std::int64_t n = 100;
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;
  bool live_set = true;
  bool ci = false;  ///< CI mode: a seed is mandatory
  WindowPolicy window{};
  std::vector<double> probe_times;
  std::string out_dir;

  int pattern_width = 9;
  bool dump_trajectory = false;  ///< simulate: trajectory.csv for run 0

  // invariant-measure
  std::int64_t reference_n = 0;  ///< Bernoulli-start ensemble size (0: same as n)
  double pool_spacing = 10.0;    ///< spacing of pooled samples along a path

  // clt
  std::int64_t covariance_index = 100;  ///< j in Cov(xi_j, xi_{j+k})
  std::int64_t max_lag = 60;

  // gap-stats
  std::int64_t gap_offset = 5;
  std::int64_t gap_span = 100;
  std::vector<std::int64_t> gap_lengths{5, 10, 20};

  // drift-diagnostic
  double theta = 1.2;
  std::int64_t box_half = 20;

  // restart
  int max_restarts = 200;
  bool horizon_sensitivity = false;

  // oracle-check
  int oracle_sites = 6;
  int oracle_max_sites = 8;
  double oracle_time = 1.0;
  std::vector<double> oracle_qs{0.5, 0.77, 0.9, 1.0};

  // determinism
  unsigned compare_workers = 4;
  std::int64_t shift = 37;
};

struct Finding {
  std::string level;  ///< error | warning | note
  std::string message;
};

inline bool has_errors(const std::vector<Finding>& fs) {
  return std::any_of(fs.begin(), fs.end(), [](const Finding& f) { return f.level == "error"; });
}

/// A CSV table held in memory.
struct Table {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
      }
      out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }
};

/// Shortest round-trip decimal form; identical on every run.
inline std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}
inline std::string fmt(std::int64_t x) { return std::to_string(x); }
inline std::string fmt(std::uint64_t x) { return std::to_string(x); }
inline std::string fmt(int x) { return std::to_string(x); }
inline std::string fmt(bool b) { return b ? "1" : "0"; }

struct Output {
  json summary;
  std::vector<Table> tables;
  int exit_code = 0;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Parsing and validation

/// Parses an initial-condition spec. Bernoulli occupation defaults to the
/// equilibrium density p = 1 - q.
inline InitialCondition parse_init(const std::string& spec, double q, std::uint64_t seed) {
  if (spec == "delta0") return Delta0{};
  if (spec == "bernoulli" || spec.rfind("bernoulli:", 0) == 0) {
    BernoulliRight b;
    b.p = 1.0 - q;
    b.seed = seed;
    if (spec.size() > 10) {
      try {
        std::size_t used = 0;
        b.p = std::stod(spec.substr(10), &used);
        if (used != spec.size() - 10) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw ConfigError("bad Bernoulli density in '" + spec + "'");
      }
      if (!(b.p >= 0.0 && b.p <= 1.0)) throw ConfigError("Bernoulli density must lie in [0,1]");
    }
    return b;
  }
  if (spec.rfind("pattern:", 0) == 0) {
    ExplicitPattern e{spec.substr(8), 0};
    if (e.bits.empty()) throw ConfigError("empty pattern");
    for (char c : e.bits) {
      if (c != '0' && c != '1') throw ConfigError("pattern must consist of 0/1 characters");
    }
    if (e.bits[0] != '0') throw ConfigError("pattern must have a zero at the origin");
    return e;
  }
  throw ConfigError("unknown initial condition '" + spec + "'");
}

inline std::vector<Finding> validate(const ExperimentConfig& c) {
  std::vector<Finding> out;
  auto error = [&](std::string m) { out.push_back({"error", std::move(m)}); };
  if (!(c.q >= 0.0 && c.q <= 1.0)) error("q must lie in [0,1] (got " + fmt(c.q) + ")");
  if (!(c.t > 0.0)) error("horizon t must be positive");
  if (c.n < 1) error("ensemble size n must be at least 1");
  if (c.workers < 1) error("workers must be at least 1");
  if (c.model != "fa1f" && c.model != "tcp") error("model must be fa1f or tcp");
  if (c.model == "tcp" && c.kind != Kind::kSimulate) error("model tcp applies to simulate only");
  if (!(c.window.c_left > 0.0 && c.window.c_right > 0.0) || c.window.margin < 1 || c.window.max_widenings < 0) {
    error("window policy needs positive speeds, margin >= 1, max_widenings >= 0");
  }
  if (c.pattern_width < 0 || c.pattern_width > 62) error("pattern width must lie in [0, 62]");
  for (double pt : c.probe_times) {
    if (!(pt >= 0.0 && pt <= c.t)) error("probe time " + fmt(pt) + " outside [0, t]");
  }
  try {
    (void)parse_init(c.init, std::clamp(c.q, 0.0, 1.0), 0);
  } catch (const ConfigError& e) {
    error(e.what());
  }
  if (!c.seed) {
    if (c.ci) {
      error("a seed is mandatory in CI mode");
    } else {
      out.push_back({"note", "no seed given: an automatic seed is drawn and recorded in the summary"});
    }
  }
  if (c.q >= 0.0 && c.q <= 1.0 && c.q <= ModelParams::q_bar() && c.kind != Kind::kOracleCheck &&
      c.kind != Kind::kDeterminism) {
    out.push_back({"warning", "q = " + fmt(c.q) + " <= q_bar = " + fmt(ModelParams::q_bar()) +
                                  ": the front theorems are outside their proven regime"});
  }

  switch (c.kind) {
    case Kind::kVelocity:
      if (c.n < 2) error("velocity needs at least two runs");
      break;
    case Kind::kClt:
      if (c.n < 100) error("clt needs at least 100 runs");
      if (c.covariance_index < 1 || c.max_lag < 1) error("covariance index and max lag must be positive");
      if (static_cast<double>(c.covariance_index + c.max_lag) > c.t) {
        error("covariance index + max lag exceeds the horizon");
      }
      break;
    case Kind::kInvariantMeasure:
      if (!(c.pool_spacing > 0.0)) error("pool spacing must be positive");
      if (c.reference_n < 0) error("reference ensemble size must be nonnegative");
      break;
    case Kind::kGapStats:
      if (c.gap_span < 0 || c.gap_lengths.empty()) error("gap box and lengths must be given");
      for (auto l : c.gap_lengths) {
        if (l < 1) error("gap lengths must be positive");
      }
      break;
    case Kind::kDriftDiagnostic:
      if (!(c.theta > 1.0) || !(c.theta / (c.theta + 1.0) < c.q)) {
        error("drift diagnostic needs theta > 1 and theta/(theta+1) < q");
      }
      if (c.box_half < 0) error("box half-width must be nonnegative");
      break;
    case Kind::kRestart:
      if (c.max_restarts < 1) error("max_restarts must be positive");
      if (c.init.rfind("pattern:", 0) != 0 && c.init != "delta0" && c.init.rfind("bernoulli", 0) != 0) {
        error("restart needs an LO0 initial condition");
      }
      break;
    case Kind::kOracleCheck:
      if (c.oracle_sites < 1 || c.oracle_sites > oracle::kMaxSites) error("oracle box size must lie in [1, 20]");
      if (c.oracle_max_sites < 1 || c.oracle_max_sites > 12) error("oracle sweep size must lie in [1, 12]");
      if (!(c.oracle_time >= 0.0)) error("oracle time must be nonnegative");
      for (double q : c.oracle_qs) {
        if (!(q >= 0.0 && q <= 1.0)) error("oracle q values must lie in [0,1]");
      }
      break;
    case Kind::kDeterminism:
      if (c.compare_workers < 2) error("determinism needs compare_workers >= 2");
      break;
    default:
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON helpers

inline json to_json(const Estimate& e) { return json{{"value", e.value}, {"stderr", e.stderr_}}; }

inline json to_json(const TailFit& f) {
  return json{{"rate", f.rate}, {"r_squared", f.r_squared}, {"points", f.points}};
}

inline json to_json(const WindowPolicy& w) {
  return json{{"c_left", w.c_left}, {"c_right", w.c_right}, {"margin", w.margin}, {"max_widenings", w.max_widenings}};
}

inline json config_json(const ExperimentConfig& c, std::uint64_t seed) {
  json j;
  j["experiment"] = to_string(c.kind);
  j["q"] = c.q;
  j["p"] = 1.0 - c.q;
  j["model"] = c.model;
  j["init"] = c.init;
  j["t"] = c.t;
  j["n"] = c.n;
  j["seed"] = seed;
  j["seed_given"] = c.seed.has_value();
  j["live_set"] = c.live_set;
  j["window"] = to_json(c.window);
  j["probe_times"] = c.probe_times;
  j["pattern_width"] = c.pattern_width;
  switch (c.kind) {
    case Kind::kInvariantMeasure:
      j["reference_n"] = c.reference_n;
      j["pool_spacing"] = c.pool_spacing;
      break;
    case Kind::kClt:
      j["covariance_index"] = c.covariance_index;
      j["max_lag"] = c.max_lag;
      break;
    case Kind::kGapStats:
      j["gap_offset"] = c.gap_offset;
      j["gap_span"] = c.gap_span;
      j["gap_lengths"] = c.gap_lengths;
      break;
    case Kind::kDriftDiagnostic:
      j["theta"] = c.theta;
      j["box_half"] = c.box_half;
      break;
    case Kind::kRestart:
      j["max_restarts"] = c.max_restarts;
      j["horizon_sensitivity"] = c.horizon_sensitivity;
      break;
    case Kind::kOracleCheck:
      j["oracle_sites"] = c.oracle_sites;
      j["oracle_max_sites"] = c.oracle_max_sites;
      j["oracle_time"] = c.oracle_time;
      j["oracle_qs"] = c.oracle_qs;
      break;
    case Kind::kDeterminism:
      j["compare_workers"] = c.compare_workers;
      j["shift"] = c.shift;
      break;
    default:
      break;
  }
  return j;
}

/// Reads a JSON config; unknown keys are rejected.
inline ExperimentConfig config_from_json(const json& j, ExperimentConfig c = {}) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    try {
      if (k == "experiment") {
        auto kind = parse_kind(v.get<std::string>());
        if (!kind) throw ConfigError("unknown experiment '" + v.get<std::string>() + "'");
        c.kind = *kind;
      } else if (k == "q") {
        c.q = v.get<double>();
      } else if (k == "p") {
        // derived; kept so that a recorded config replays as is
        if (j.contains("q") && std::abs(v.get<double>() - (1.0 - j["q"].get<double>())) > 1e-12) {
          throw ConfigError("p must equal 1 - q");
        }
      } else if (k == "seed_given") {
        (void)v.get<bool>();
      } else if (k == "model") {
        c.model = v.get<std::string>();
      } else if (k == "init") {
        c.init = v.get<std::string>();
      } else if (k == "t") {
        c.t = v.get<double>();
      } else if (k == "n") {
        c.n = v.get<std::int64_t>();
      } else if (k == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (k == "workers") {
        c.workers = v.get<unsigned>();
      } else if (k == "live_set") {
        c.live_set = v.get<bool>();
      } else if (k == "ci") {
        c.ci = v.get<bool>();
      } else if (k == "window") {
        if (v.contains("c_left")) c.window.c_left = v["c_left"].get<double>();
        if (v.contains("c_right")) c.window.c_right = v["c_right"].get<double>();
        if (v.contains("margin")) c.window.margin = v["margin"].get<std::int64_t>();
        if (v.contains("max_widenings")) c.window.max_widenings = v["max_widenings"].get<int>();
      } else if (k == "probe_times") {
        c.probe_times = v.get<std::vector<double>>();
      } else if (k == "out") {
        c.out_dir = v.get<std::string>();
      } else if (k == "pattern_width") {
        c.pattern_width = v.get<int>();
      } else if (k == "dump_trajectory") {
        c.dump_trajectory = v.get<bool>();
      } else if (k == "reference_n") {
        c.reference_n = v.get<std::int64_t>();
      } else if (k == "pool_spacing") {
        c.pool_spacing = v.get<double>();
      } else if (k == "covariance_index") {
        c.covariance_index = v.get<std::int64_t>();
      } else if (k == "max_lag") {
        c.max_lag = v.get<std::int64_t>();
      } else if (k == "gap_offset") {
        c.gap_offset = v.get<std::int64_t>();
      } else if (k == "gap_span") {
        c.gap_span = v.get<std::int64_t>();
      } else if (k == "gap_lengths") {
        c.gap_lengths = v.get<std::vector<std::int64_t>>();
      } else if (k == "theta") {
        c.theta = v.get<double>();
      } else if (k == "box_half") {
        c.box_half = v.get<std::int64_t>();
      } else if (k == "max_restarts") {
        c.max_restarts = v.get<int>();
      } else if (k == "horizon_sensitivity") {
        c.horizon_sensitivity = v.get<bool>();
      } else if (k == "oracle_sites") {
        c.oracle_sites = v.get<int>();
      } else if (k == "oracle_max_sites") {
        c.oracle_max_sites = v.get<int>();
      } else if (k == "oracle_time") {
        c.oracle_time = v.get<double>();
      } else if (k == "oracle_qs") {
        c.oracle_qs = v.get<std::vector<double>>();
      } else if (k == "compare_workers") {
        c.compare_workers = v.get<unsigned>();
      } else if (k == "shift") {
        c.shift = v.get<std::int64_t>();
      } else {
        throw ConfigError("unknown config key '" + k + "'");
      }
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + k + "': " + e.what());
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Front ensembles and their analyses

inline FrontRunSpec front_spec(const ExperimentConfig& c, std::uint64_t seed) {
  FrontRunSpec s;
  s.params = {ModelKind::kFA1f, c.q};
  s.init = parse_init(c.init, c.q, seed);
  s.horizon = c.t;
  s.probe_times = c.probe_times.empty() ? std::vector<double>{c.t} : c.probe_times;
  s.pattern_width = c.pattern_width;
  s.occupancy_from = c.t / 2.0;
  s.engine.live_set = c.live_set;
  s.window = c.window;
  s.seed = seed;
  return s;
}

inline std::vector<FrontRunRecord> run_front_ensemble(const FrontRunSpec& spec, std::int64_t n, unsigned workers) {
  return parallel_map(static_cast<std::size_t>(n), workers,
                      [&](std::size_t i) { return run_front(spec, static_cast<std::uint64_t>(i)); });
}

inline IncrementTable increment_table(const std::vector<FrontRunRecord>& runs) {
  IncrementTable table;
  table.reserve(runs.size());
  for (const auto& r : runs) {
    std::vector<double> row;
    row.reserve(r.front_at_integer.size());
    for (std::size_t i = 1; i < r.front_at_integer.size(); ++i) {
      row.push_back(static_cast<double>(r.front_at_integer[i] - r.front_at_integer[i - 1]));
    }
    table.push_back(std::move(row));
  }
  return table;
}

struct VelocityAnalysis {
  Estimate v_hat;
  Estimate nu_empty_at_1;        ///< occupation fraction of {sigma~(1) = 0} on [t/2, t]
  Estimate nu_empty_snapshot;    ///< fraction of runs with sigma~(1) = 0 at t
  Estimate residual;
  Estimate minus_rate;           ///< -1 jumps per unit time
  Estimate plus_intensity_gap;   ///< (+1 jumps per unit time) - p * occupation fraction, on [t/2, t]
  JumpStats jumps;
  double unit_jump_fraction = 1.0;
  double plus_empty_right_fraction = 1.0;
  std::uint64_t rings = 0;
};

inline VelocityAnalysis analyze_velocity(const std::vector<FrontRunRecord>& runs, double t, double q,
                                         double occupancy_from) {
  VelocityAnalysis a;
  const double p = 1.0 - q;
  const double span = t - occupancy_from;
  std::vector<double> xs, occ, snap, minus, gap;
  for (const auto& r : runs) {
    xs.push_back(static_cast<double>(r.final_front));
    occ.push_back(span > 0.0 ? r.empty_right_time / span : 0.0);
    if (!r.patterns.empty()) snap.push_back(r.patterns.back()[1] == 0 ? 1.0 : 0.0);
    minus.push_back(static_cast<double>(r.jumps.minus) / t);
    if (span > 0.0) gap.push_back(static_cast<double>(r.plus_after) / span - p * occ.back());
    a.jumps += r.jumps;
    a.rings += r.rings;
  }
  a.v_hat = velocity_estimate(xs, t);
  a.nu_empty_at_1 = stats::mean_estimate(occ);
  if (snap.size() >= 2) a.nu_empty_snapshot = stats::mean_estimate(snap);
  a.residual = velocity_formula_residual(a.v_hat, a.nu_empty_at_1, q);
  a.minus_rate = stats::mean_estimate(minus);
  if (gap.size() >= 2) a.plus_intensity_gap = stats::mean_estimate(gap);
  const double all = static_cast<double>(a.jumps.minus + a.jumps.plus + a.jumps.other);
  a.unit_jump_fraction = all > 0 ? static_cast<double>(a.jumps.minus + a.jumps.plus) / all : 1.0;
  a.plus_empty_right_fraction =
      a.jumps.plus > 0 ? static_cast<double>(a.jumps.plus_with_empty_right) / static_cast<double>(a.jumps.plus) : 1.0;
  return a;
}

inline json to_json(const VelocityAnalysis& a) {
  return json{{"v_hat", to_json(a.v_hat)},
              {"nu_empty_at_1", to_json(a.nu_empty_at_1)},
              {"nu_empty_at_1_snapshot", to_json(a.nu_empty_snapshot)},
              {"formula_residual", to_json(a.residual)},
              {"minus_jump_rate", to_json(a.minus_rate)},
              {"plus_intensity_gap", to_json(a.plus_intensity_gap)},
              {"jumps",
               {{"minus", a.jumps.minus},
                {"plus", a.jumps.plus},
                {"plus_with_empty_right", a.jumps.plus_with_empty_right},
                {"other", a.jumps.other}}},
              {"unit_jump_fraction", a.unit_jump_fraction},
              {"plus_empty_right_fraction", a.plus_empty_right_fraction},
              {"rings", a.rings}};
}

struct CltAnalysis {
  Estimate v_hat;
  Estimate s2_direct;
  SeriesDiffusivity s2_series;
  double relative_gap = 0.0;  ///< |s2_series - s2_direct| / s2_direct
  stats::KsResult ks;
  std::int64_t covariance_index = 0;
  std::vector<Estimate> covariances;  ///< Cov(xi_j, xi_{j+k}), k = 0..max_lag
  std::optional<std::int64_t> first_quiet_lag;  ///< first k >= 1 with |Cov| < 2 stderr
  std::vector<double> zero_density;  ///< nu_hat[sigma~(k) = 0] at t, k = 0..width
};

inline CltAnalysis analyze_clt(const std::vector<FrontRunRecord>& runs, double t, std::int64_t j,
                               std::int64_t max_lag, int width) {
  CltAnalysis a;
  std::vector<double> xs;
  for (const auto& r : runs) xs.push_back(static_cast<double>(r.final_front));
  a.v_hat = velocity_estimate(xs, t);
  a.s2_direct = diffusivity_direct(xs, t);
  const auto table = increment_table(runs);
  const auto last = static_cast<std::size_t>(std::floor(t));
  a.s2_series = diffusivity_series(table, std::max<std::size_t>(1, last / 2), last);
  a.relative_gap = std::abs(a.s2_series.s2.value - a.s2_direct.value) / a.s2_direct.value;
  a.ks = clt_check(xs, t, a.v_hat.value, a.s2_direct.value);
  a.covariance_index = j;
  for (std::int64_t k = 0; k <= max_lag; ++k) {
    if (static_cast<std::size_t>(j + k) > last) break;
    const auto c = covariance_lag(table, static_cast<std::size_t>(j), static_cast<std::size_t>(k),
                                  std::min<std::size_t>(100, runs.size()));
    a.covariances.push_back(c);
    if (k >= 1 && !a.first_quiet_lag && std::abs(c.value) < 2.0 * c.stderr_) a.first_quiet_lag = k;
  }
  if (width >= 0 && !runs.empty() && !runs.front().patterns.empty()) {
    EmpiricalPatternMeasure m(width);
    for (const auto& r : runs) m.add(r.patterns.back());
    for (int k = 0; k <= width; ++k) a.zero_density.push_back(zero_density(m, k));
  }
  return a;
}

inline json to_json(const CltAnalysis& a) {
  json lags = json::array();
  for (const auto& e : a.s2_series.lags) lags.push_back(to_json(e));
  json cov = json::array();
  for (const auto& e : a.covariances) cov.push_back(to_json(e));
  return json{{"v_hat", to_json(a.v_hat)},
              {"s2_hat_direct", to_json(a.s2_direct)},
              {"s2_hat_series", to_json(a.s2_series.s2)},
              {"s2_series_lags_used", a.s2_series.lags_used},
              {"s2_relative_gap", a.relative_gap},
              {"ks_statistic", a.ks.statistic},
              {"ks_pvalue", a.ks.p_value},
              {"covariance_index", a.covariance_index},
              {"covariance_lags", cov},
              {"first_quiet_lag", a.first_quiet_lag ? json(*a.first_quiet_lag) : json(nullptr)},
              {"stationary_autocovariance", lags},
              {"zero_density", a.zero_density}};
}

/// Patterns of one path at integer times s, s - spacing, ... down to `from`.
inline void pool_patterns(EmpiricalPatternMeasure& m, const FrontRunRecord& r, double from, double s,
                          double spacing) {
  for (double u = std::floor(s); u >= from - 1e-9; u -= spacing) {
    const auto k = static_cast<std::int64_t>(std::llround(u));
    if (k < 1 || static_cast<std::size_t>(k) > r.pattern_at_integer.size()) continue;
    m.add(Pattern{r.pattern_at_integer[static_cast<std::size_t>(k - 1)], m.width()});
  }
}

inline EmpiricalPatternMeasure pooled_measure(const std::vector<FrontRunRecord>& runs, int width, double from,
                                              double s, double spacing) {
  EmpiricalPatternMeasure m(width);
  for (const auto& r : runs) pool_patterns(m, r, from, s, spacing);
  return m;
}

struct TvPoint {
  double time = 0.0;
  double tv = 0.0;
  double error = 0.0;  ///< multinomial sampling error
  std::uint64_t samples_a = 0;
  std::uint64_t samples_b = 0;
};

inline TvPoint tv_point(double time, const EmpiricalPatternMeasure& a, const EmpiricalPatternMeasure& b) {
  return {time, tv_distance(a, b), tv_sampling_error(a, b), a.samples(), b.samples()};
}

inline json to_json(const TvPoint& p) {
  return json{{"time", p.time}, {"tv", p.tv}, {"sampling_error", p.error}, {"samples_a", p.samples_a},
              {"samples_b", p.samples_b}};
}

struct InvariantMeasureAnalysis {
  std::vector<TvPoint> start_conditions;  ///< pooled delta-start vs Bernoulli-start, per probe time
  std::vector<TvPoint> snapshot_start_conditions;  ///< one sample per path at the probe time
  std::vector<TvPoint> versus_final;  ///< pooled at probe time vs pooled at t (delta-start)
  TvPoint burn_in;                    ///< burn-in t/2 vs t/4 at t
  bool decreasing = false;            ///< start-condition TV strictly decreasing over probe times
  std::vector<double> zero_density;   ///< pooled nu_hat[sigma~(k) = 0] at t
};

inline InvariantMeasureAnalysis analyze_invariant_measure(const std::vector<FrontRunRecord>& a,
                                                          const std::vector<FrontRunRecord>& b,
                                                          std::vector<double> times, double t, int width,
                                                          double spacing) {
  InvariantMeasureAnalysis out;
  std::sort(times.begin(), times.end());
  const auto final_a = pooled_measure(a, width, t / 2.0, t, spacing);
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double s = times[i];
    const auto ma = pooled_measure(a, width, s / 2.0, s, spacing);
    const auto mb = pooled_measure(b, width, s / 2.0, s, spacing);
    out.start_conditions.push_back(tv_point(s, ma, mb));
    out.versus_final.push_back(tv_point(s, ma, final_a));
    EmpiricalPatternMeasure sa(width), sb(width);
    for (const auto& r : a) pool_patterns(sa, r, s, s, spacing);
    for (const auto& r : b) pool_patterns(sb, r, s, s, spacing);
    out.snapshot_start_conditions.push_back(tv_point(s, sa, sb));
  }
  out.decreasing = out.start_conditions.size() >= 2;
  for (std::size_t i = 1; i < out.start_conditions.size(); ++i) {
    if (!(out.start_conditions[i].tv < out.start_conditions[i - 1].tv)) out.decreasing = false;
  }
  out.burn_in = tv_point(t, final_a, pooled_measure(a, width, t / 4.0, t, spacing));
  for (int k = 0; k <= width; ++k) out.zero_density.push_back(zero_density(final_a, k));
  return out;
}

struct GapAnalysis {
  std::vector<std::int64_t> lengths;
  std::vector<double> probe_times;
  std::vector<std::vector<Estimate>> violation;  ///< [probe][length]: frequency of leaving H
  bool strictly_decreasing_at_t = false;
};

inline GapAnalysis analyze_gaps(const std::vector<FrontRunRecord>& runs, const std::vector<double>& probe_times,
                                const std::vector<std::int64_t>& lengths) {
  GapAnalysis g;
  g.lengths = lengths;
  g.probe_times = probe_times;
  std::sort(g.probe_times.begin(), g.probe_times.end());
  for (std::size_t i = 0; i < g.probe_times.size(); ++i) {
    std::vector<Estimate> row;
    for (std::size_t k = 0; k < lengths.size(); ++k) {
      std::vector<double> v;
      for (const auto& r : runs) v.push_back(r.gap_ok.at(i).at(k) ? 0.0 : 1.0);
      row.push_back(v.size() >= 2 ? stats::mean_estimate(v) : Estimate{v.empty() ? 0.0 : v[0], 0.0});
    }
    g.violation.push_back(std::move(row));
  }
  if (!g.violation.empty()) {
    const auto& last = g.violation.back();
    g.strictly_decreasing_at_t = last.size() >= 2;
    for (std::size_t k = 1; k < last.size(); ++k) {
      if (!(last[k].value < last[k - 1].value)) g.strictly_decreasing_at_t = false;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Contact process, restart, drift, oracle, coupling, determinism

struct ContactRun {
  bool survived = false;
  double time = 0.0;
  std::int64_t last_zero = 0;
  std::uint64_t rings = 0;
};

inline ContactRun run_contact(const ModelParams& params, const InitialCondition& init, double horizon,
                              std::uint64_t seed, std::uint64_t run_id, const WindowPolicy& policy,
                              EngineOptions engine) {
  const ClockCollection clocks(seed, collection_id(run_id, 0), params.p());
  const auto ext = with_widening(initial_support_hi(init), horizon, policy, [&](Interval w, const WindowPolicy& pol) {
    return extinction_time(make_initial(initial_for_run(init, run_id), w, pol.margin), {ModelKind::kTCP, params.q},
                           clocks, horizon, engine);
  });
  ContactRun r;
  r.survived = !ext.time.has_value();
  r.time = ext.time.value_or(horizon);
  r.last_zero = ext.last_zero.value_or(0);
  r.rings = ext.rings;
  return r;
}

struct ContactAnalysis {
  Estimate survival;
  std::uint64_t deaths = 0;
  std::optional<TailFit> death_tail;
  std::string tail_note;
};

inline ContactAnalysis analyze_contact(const std::vector<ContactRun>& runs) {
  ContactAnalysis a;
  std::vector<double> surv, deaths;
  for (const auto& r : runs) {
    surv.push_back(r.survived ? 1.0 : 0.0);
    if (!r.survived) deaths.push_back(r.time);
  }
  a.survival = surv.size() >= 2 ? stats::mean_estimate(surv) : Estimate{surv.empty() ? 0.0 : surv[0], 0.0};
  a.deaths = deaths.size();
  try {
    a.death_tail = tail_fit(deaths);
  } catch (const std::exception& e) {
    a.tail_note = e.what();
  }
  return a;
}

inline json to_json(const ContactAnalysis& a) {
  return json{{"survival_frequency", to_json(a.survival)},
              {"deaths", a.deaths},
              {"extinction_time_tail", a.death_tail ? to_json(*a.death_tail) : json(nullptr)},
              {"tail_note", a.tail_note}};
}

struct RestartAnalysis {
  std::uint64_t runs = 0;
  std::uint64_t survived = 0;
  std::uint64_t restarts = 0;
  std::uint64_t anchor_failures = 0;  ///< restarts with X_i > Z_i + 1
  std::uint64_t order_violations = 0;
  Estimate mean_T;
  Estimate mean_abs_Y;
  Estimate mean_L;
  std::optional<TailFit> tail_T;
  std::optional<TailFit> tail_Y;
  std::optional<TailFit> tail_L;
  std::string note;
};

inline RestartAnalysis analyze_restart(const std::vector<RestartOutcome>& outs) {
  RestartAnalysis a;
  std::vector<double> T, Y, L;
  for (const auto& o : outs) {
    ++a.runs;
    a.survived += o.survived ? 1 : 0;
    a.restarts += o.restart_log.size();
    for (const auto& e : o.restart_log) a.anchor_failures += e.X > e.Z + 1 ? 1 : 0;
    a.order_violations += o.order_violations;
    T.push_back(o.T);
    Y.push_back(static_cast<double>(std::abs(o.Y)));
    L.push_back(static_cast<double>(o.L));
  }
  if (T.size() >= 2) {
    a.mean_T = stats::mean_estimate(T);
    a.mean_abs_Y = stats::mean_estimate(Y);
    a.mean_L = stats::mean_estimate(L);
  }
  auto fit = [&](const std::vector<double>& v, std::optional<TailFit>& dst, const char* what) {
    try {
      dst = tail_fit(v);
    } catch (const std::exception& e) {
      a.note += std::string(what) + ": " + e.what() + "; ";
    }
  };
  fit(T, a.tail_T, "T");
  fit(Y, a.tail_Y, "|Y|");
  fit(L, a.tail_L, "L");
  return a;
}

inline json to_json(const RestartAnalysis& a) {
  auto opt = [](const std::optional<TailFit>& f) { return f ? to_json(*f) : json(nullptr); };
  return json{{"runs", a.runs},
              {"survived", a.survived},
              {"restarts", a.restarts},
              {"anchor_failures", a.anchor_failures},
              {"order_violations", a.order_violations},
              {"mean_T", to_json(a.mean_T)},
              {"mean_abs_Y", to_json(a.mean_abs_Y)},
              {"mean_L", to_json(a.mean_L)},
              {"tail_T", opt(a.tail_T)},
              {"tail_abs_Y", opt(a.tail_Y)},
              {"tail_L", opt(a.tail_L)},
              {"note", a.note}};
}

inline std::vector<RestartOutcome> run_restart_ensemble(const ModelParams& params, const InitialCondition& init,
                                                        double horizon, int max_restarts, std::int64_t n,
                                                        std::uint64_t seed, unsigned workers,
                                                        const WindowPolicy& policy, EngineOptions engine) {
  RestartOptions opts{horizon, max_restarts, engine};
  return parallel_map(static_cast<std::size_t>(n), workers, [&](std::size_t i) {
    RestartOutcome o = restart_couple(initial_for_run(init, i), params, seed, i, opts, policy);
    o.fa_final = {};
    o.tcp_final = {};
    return o;
  });
}

/// theta^xi samples of the finite-volume FA-1f on [-h, h] from all ones.
inline std::vector<std::vector<double>> drift_samples(double q, std::int64_t h, std::int64_t x,
                                                      std::vector<double> times, std::int64_t n,
                                                      std::uint64_t seed, unsigned workers, bool live_set) {
  std::sort(times.begin(), times.end());
  const Interval box{-h, h};
  const ModelParams params{ModelKind::kFA1f, q};
  auto per_run = parallel_map(static_cast<std::size_t>(n), workers, [&](std::size_t i) {
    SpinConfig s(box, 0, 0);
    for (std::int64_t y = box.lo; y <= box.hi; ++y) s.set(y, 1);
    Engine engine({Layer{ModelKind::kFA1f, std::move(s)}},
                  ClockCollection(seed, collection_id(i, 0), params.p()), 0.0, {live_set, false});
    std::vector<double> xi;
    for (double t : times) {
      engine.run_until(t);
      xi.push_back(static_cast<double>(distance_to_zero(engine.config(), x, box)));
    }
    return xi;
  });
  std::vector<std::vector<double>> out(times.size());
  for (const auto& r : per_run) {
    for (std::size_t k = 0; k < times.size(); ++k) out[k].push_back(r[k]);
  }
  return out;
}

struct OracleSweepRow {
  int sites;
  double q;
  double detailed_balance;
  double stationarity;
  double row_sum;
};

inline std::vector<OracleSweepRow> oracle_sweep(int max_sites, const std::vector<double>& qs) {
  std::vector<OracleSweepRow> rows;
  for (double q : qs) {
    for (int n = 1; n <= max_sites; ++n) {
      const oracle::GeneratorMatrix g(n, {ModelKind::kFA1f, q}, oracle::Boundary::kZero);
      double row_sum = 0.0;
      for (std::size_t s = 0; s < g.dimension(); ++s) {
        double acc = g.entry(s, s);
        for (int k = 0; k < n; ++k) acc += g.entry(s, s ^ (std::size_t{1} << k));
        row_sum = std::max(row_sum, std::abs(acc));
      }
      rows.push_back({n, q, oracle::detailed_balance_violation(g, 1.0 - q),
                      oracle::stationarity_violation(g, oracle::product_measure(n, 1.0 - q)), row_sum});
    }
  }
  return rows;
}

struct EngineOracleComparison {
  double tv = 0.0;
  std::vector<double> exact;
  std::vector<double> empirical;
};

/// Finite-volume FA-1f on [1, sites] from all ones: Monte Carlo law at time t
/// against the uniformized transient law.
inline EngineOracleComparison engine_vs_oracle(double q, int sites, double t, std::int64_t n, std::uint64_t seed,
                                               unsigned workers, bool live_set) {
  const Interval box{1, sites};
  const ModelParams params{ModelKind::kFA1f, q};
  const auto g = oracle::generator_matrix(params, box, oracle::Boundary::kZero);
  const std::size_t all_ones = g.dimension() - 1;
  const auto exact = oracle::transient_distribution(g, all_ones, t);
  SpinConfig start(box, 0, 0);
  for (std::int64_t x = box.lo; x <= box.hi; ++x) start.set(x, 1);
  const auto states = parallel_map(static_cast<std::size_t>(n), workers, [&](std::size_t i) {
    const auto s = evolve_finite_volume(start, params, box, ClockCollection(seed, collection_id(i, 0), params.p()),
                                        0.0, t, live_set);
    return oracle::state_index(s, box);
  });
  std::vector<double> counts(g.dimension(), 0.0);
  for (auto s : states) counts[s] += 1.0;
  for (double& c : counts) c /= static_cast<double>(n);
  EngineOracleComparison out;
  out.exact = exact.probs();
  out.empirical = counts;
  double sum = 0.0;
  for (std::size_t s = 0; s < counts.size(); ++s) sum += std::abs(counts[s] - out.exact[s]);
  out.tv = 0.5 * sum;
  return out;
}

struct CouplingTotals {
  std::uint64_t runs = 0;
  std::uint64_t updates = 0;
  std::uint64_t order_violations = 0;
};

/// FA-1f from `init` (per run) coupled to a contact process from delta^0.
inline CouplingTotals run_coupling(double q, const InitialCondition& init, double t, std::int64_t n,
                                   std::uint64_t seed, unsigned workers, const WindowPolicy& policy,
                                   EngineOptions engine) {
  const ModelParams fa{ModelKind::kFA1f, q}, tcp{ModelKind::kTCP, q};
  const auto per_run = parallel_map(static_cast<std::size_t>(n), workers, [&](std::size_t i) {
    const ClockCollection clocks(seed, collection_id(i, 0), fa.p());
    return with_widening(initial_support_hi(init), t, policy, [&](Interval w, const WindowPolicy& pol) {
      CoupledPair pair{make_initial(initial_for_run(init, i), w, pol.margin), make_initial(Delta0{}, w, pol.margin)};
      return evolve_coupled(std::move(pair), fa, tcp, clocks, 0.0, t, engine, true);
    });
  });
  CouplingTotals tot;
  for (const auto& p : per_run) {
    ++tot.runs;
    tot.updates += p.updates;
    tot.order_violations += p.order_violations;
  }
  return tot;
}

struct DeterminismReport {
  std::uint64_t seeds = 0;
  std::uint64_t worker_mismatches = 0;
  std::uint64_t live_set_mismatches = 0;  ///< FA-1f, contact process and the coupled pair
  std::uint64_t shift_mismatches = 0;
};

inline bool same_record(const FrontRunRecord& a, const FrontRunRecord& b) {
  return a.front_at_integer == b.front_at_integer && a.final_front == b.final_front &&
         a.path.times() == b.path.times() && a.path.positions() == b.path.positions() &&
         a.empty_right_time == b.empty_right_time && a.patterns == b.patterns;
}

struct TraceStep {
  double time;
  std::int64_t site;
  std::size_t layer;
  int value;
  friend bool operator==(const TraceStep&, const TraceStep&) = default;
};

/// Every spin change of an engine run, plus the final configurations.
inline std::pair<std::vector<TraceStep>, std::vector<SpinConfig>> trace(std::vector<Layer> layers,
                                                                        const ClockCollection& clocks, double t,
                                                                        bool live_set) {
  Engine engine(std::move(layers), clocks, 0.0, {live_set, false});
  std::vector<TraceStep> steps;
  engine.run_until(t, [&](const Change& c) {
    steps.push_back({c.time, c.site, c.layer, c.new_value});
    return false;
  });
  std::vector<SpinConfig> finals;
  for (std::size_t l = 0; l < engine.layer_count(); ++l) finals.push_back(engine.config(l));
  return {std::move(steps), std::move(finals)};
}

inline DeterminismReport check_determinism(double q, const InitialCondition& init, double t, std::int64_t n,
                                           std::uint64_t seed, unsigned compare_workers, std::int64_t shift,
                                           const WindowPolicy& policy) {
  DeterminismReport rep;
  rep.seeds = static_cast<std::uint64_t>(n);

  FrontRunSpec spec;
  spec.params = {ModelKind::kFA1f, q};
  spec.init = init;
  spec.horizon = t;
  spec.probe_times = {t / 2.0, t};
  spec.window = policy;
  spec.seed = seed;
  const auto serial = run_front_ensemble(spec, n, 1);
  const auto parallel = run_front_ensemble(spec, n, compare_workers);
  for (std::size_t i = 0; i < serial.size(); ++i) rep.worker_mismatches += same_record(serial[i], parallel[i]) ? 0 : 1;

  const Interval w = adequate_window(initial_support_hi(init), t, policy);
  const ModelParams params{ModelKind::kFA1f, q};
  for (std::int64_t i = 0; i < n; ++i) {
    const auto run = static_cast<std::uint64_t>(i);
    const ClockCollection clocks(seed ^ 0x5DEECE66Dull, collection_id(run, 0), params.p());
    const SpinConfig sigma = make_initial(initial_for_run(init, run), w, 0);
    const SpinConfig eta = make_initial(Delta0{}, w, 0);
    const std::vector<std::vector<Layer>> cases = {
        {Layer{ModelKind::kFA1f, sigma}},
        {Layer{ModelKind::kTCP, eta}},
        {Layer{ModelKind::kFA1f, sigma}, Layer{ModelKind::kTCP, eta}},
    };
    for (const auto& layers : cases) {
      if (trace(layers, clocks, t, true) != trace(layers, clocks, t, false)) ++rep.live_set_mismatches;
    }

    // theta_y sigma under theta_y C against theta_y of the original evolution.
    const auto base = trace({Layer{ModelKind::kFA1f, sigma}}, clocks, t, true);
    const auto moved = trace({Layer{ModelKind::kFA1f, sigma.shifted(shift)}}, clocks.shifted(shift), t, true);
    bool same = base.first.size() == moved.first.size() && base.second[0].shifted(shift) == moved.second[0];
    for (std::size_t k = 0; same && k < base.first.size(); ++k) {
      const auto& a = base.first[k];
      const auto& b = moved.first[k];
      same = a.time == b.time && a.site - shift == b.site && a.value == b.value;
    }
    rep.shift_mismatches += same ? 0 : 1;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Driver

inline std::uint64_t resolve_seed(const ExperimentConfig& c) {
  if (c.seed) return *c.seed;
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace detail {

inline std::vector<Table> front_tables(const std::vector<FrontRunRecord>& runs) {
  Table t{"runs.csv",
          {"run_id", "final_front", "empty_right_time", "minus_jumps", "plus_jumps", "plus_with_empty_right",
           "other_jumps", "rings", "window_lo", "window_hi"},
          {}};
  for (const auto& r : runs) {
    t.rows.push_back({fmt(r.run_id), fmt(r.final_front), fmt(r.empty_right_time), fmt(r.jumps.minus),
                      fmt(r.jumps.plus), fmt(r.jumps.plus_with_empty_right), fmt(r.jumps.other), fmt(r.rings),
                      fmt(r.window.lo), fmt(r.window.hi)});
  }
  return {t};
}

inline Table front_probe_table(const std::vector<FrontRunRecord>& runs, const std::vector<double>& times, int width,
                               const std::vector<GapProbe>& gaps) {
  Table t{"probes.csv", {"run_id", "time", "observable", "value"}, {}};
  std::vector<double> sorted = times;
  std::sort(sorted.begin(), sorted.end());
  for (const auto& r : runs) {
    for (std::size_t i = 0; i < r.gap_ok.size() && i < sorted.size(); ++i) {
      t.rows.push_back({fmt(r.run_id), fmt(sorted[i]), "front", fmt(r.path.at(sorted[i]))});
      if (i < r.patterns.size()) {
        t.rows.push_back({fmt(r.run_id), fmt(sorted[i]), "pattern_w" + fmt(width), r.patterns[i].to_string()});
      }
      for (std::size_t k = 0; k < gaps.size(); ++k) {
        t.rows.push_back({fmt(r.run_id), fmt(sorted[i]),
                          "gap_" + fmt(gaps[k].a) + "_" + fmt(gaps[k].b) + "_" + fmt(gaps[k].l),
                          fmt(r.gap_ok[i][k])});
      }
    }
  }
  return t;
}

inline void simulate(const ExperimentConfig& c, std::uint64_t seed, Output& out) {
  const ModelParams params{c.model == "tcp" ? ModelKind::kTCP : ModelKind::kFA1f, c.q};
  const InitialCondition init = parse_init(c.init, c.q, seed);
  ProbePlan plan;
  plan.times = c.probe_times.empty() ? std::vector<double>{c.t} : c.probe_times;
  plan.pattern_width = c.pattern_width;

  Table runs{"runs.csv", {"run_id", "final_front", "zeros", "rings", "window_lo", "window_hi"}, {}};
  Table probes{"probes.csv", {"run_id", "time", "observable", "value"}, {}};
  Table dump{"trajectory.csv", {"time", "site", "old", "new", "front"}, {}};
  struct RunOut {
    EvolveResult res;
    Interval window;
    std::vector<std::vector<std::string>> dump;
  };
  const auto results = parallel_map(static_cast<std::size_t>(c.n), c.workers, [&](std::size_t i) {
    const ClockCollection clocks(seed, collection_id(i, 0), params.p());
    return with_widening(initial_support_hi(init) + c.pattern_width, c.t, c.window,
                         [&](Interval w, const WindowPolicy& pol) {
                           RunOut r;
                           r.window = w;
                           auto sink = [&](const Change& ch, const SpinConfig& s) {
                             if (!(c.dump_trajectory && i == 0)) return;
                             const auto f = s.leftmost_zero();
                             r.dump.push_back({fmt(ch.time), fmt(ch.site), fmt(ch.old_value), fmt(ch.new_value),
                                               f ? fmt(*f) : std::string()});
                           };
                           r.res = evolve(make_initial(initial_for_run(init, i), w, pol.margin), params, clocks, 0.0,
                                          c.t, plan, {c.live_set, true}, sink);
                           return r;
                         });
  });

  std::vector<double> fronts, zeros;
  std::uint64_t rings = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const auto f = r.res.config.leftmost_zero();
    const auto z = r.res.config.count_zeros();
    if (f) fronts.push_back(static_cast<double>(*f));
    zeros.push_back(static_cast<double>(z));
    rings += r.res.rings;
    runs.rows.push_back({fmt(static_cast<std::uint64_t>(i)), f ? fmt(*f) : std::string(), fmt(z), fmt(r.res.rings),
                         fmt(r.window.lo), fmt(r.window.hi)});
    for (const auto& p : r.res.probes) {
      std::string value = p.observable.rfind("pattern_w", 0) == 0
                              ? Pattern{static_cast<std::uint64_t>(p.value), c.pattern_width}.to_string()
                              : fmt(p.value);
      probes.rows.push_back({fmt(static_cast<std::uint64_t>(i)), fmt(p.time), p.observable, value});
    }
    if (i == 0) dump.rows = r.dump;
  }
  json res;
  res["runs"] = c.n;
  res["surviving_fronts"] = fronts.size();
  res["mean_final_front"] = fronts.size() >= 2 ? to_json(stats::mean_estimate(fronts)) : json(nullptr);
  res["mean_zeros"] = zeros.size() >= 2 ? to_json(stats::mean_estimate(zeros)) : json(nullptr);
  res["rings"] = rings;
  out.summary["results"] = res;
  out.tables = {runs, probes};
  if (c.dump_trajectory) out.tables.push_back(dump);
}

inline void velocity(const ExperimentConfig& c, std::uint64_t seed, Output& out) {
  const auto spec = front_spec(c, seed);
  const auto runs = run_front_ensemble(spec, c.n, c.workers);
  const auto a = analyze_velocity(runs, c.t, c.q, spec.occupancy_from);
  out.summary["results"] = to_json(a);
  out.tables = front_tables(runs);
  out.tables.push_back(front_probe_table(runs, spec.probe_times, spec.pattern_width, {}));
}

inline void clt(const ExperimentConfig& c, std::uint64_t seed, Output& out) {
  const auto spec = front_spec(c, seed);
  const auto runs = run_front_ensemble(spec, c.n, c.workers);
  const auto a = analyze_clt(runs, c.t, c.covariance_index, c.max_lag, c.pattern_width);
  out.summary["results"] = to_json(a);
  out.tables = front_tables(runs);
  Table cov{"covariances.csv", {"lag", "value", "stderr"}, {}};
  for (std::size_t k = 0; k < a.covariances.size(); ++k) {
    cov.rows.push_back({fmt(static_cast<std::uint64_t>(k)), fmt(a.covariances[k].value), fmt(a.covariances[k].stderr_)});
  }
  Table series{"autocovariance.csv", {"lag", "value", "stderr"}, {}};
  for (std::size_t k = 0; k < a.s2_series.lags.size(); ++k) {
    series.rows.push_back(
        {fmt(static_cast<std::uint64_t>(k)), fmt(a.s2_series.lags[k].value), fmt(a.s2_series.lags[k].stderr_)});
  }
  out.tables.push_back(cov);
  out.tables.push_back(series);
}

inline void invariant_measure(const ExperimentConfig& c, std::uint64_t seed, Output& out) {
  auto spec = front_spec(c, seed);
  spec.pattern_series = true;
  std::vector<double> times = c.probe_times;
  if (times.empty()) times = {c.t / 8.0, c.t / 4.0, c.t / 2.0, c.t};
  spec.probe_times = {c.t};
  const auto a = run_front_ensemble(spec, c.n, c.workers);
  auto ref = spec;
  const std::uint64_t ref_seed = splitmix64(seed ^ 0xB5AD4ECEDA1CE2A9ull);
  ref.seed = ref_seed;
  ref.init = parse_init("bernoulli", c.q, ref_seed);
  const auto b = run_front_ensemble(ref, c.reference_n > 0 ? c.reference_n : c.n, c.workers);
  const auto m = analyze_invariant_measure(a, b, times, c.t, c.pattern_width, c.pool_spacing);

  json res;
  json sc = json::array(), snap = json::array(), vf = json::array();
  for (const auto& p : m.start_conditions) sc.push_back(to_json(p));
  for (const auto& p : m.snapshot_start_conditions) snap.push_back(to_json(p));
  for (const auto& p : m.versus_final) vf.push_back(to_json(p));
  res["reference_seed"] = ref_seed;
  res["tv_start_conditions"] = sc;
  res["tv_start_conditions_snapshot"] = snap;
  res["tv_versus_final"] = vf;
  res["tv_burn_in"] = to_json(m.burn_in);
  res["start_condition_tv_decreasing"] = m.decreasing;
  res["zero_density"] = m.zero_density;
  out.summary["results"] = res;

  Table curve{"tv_curve.csv",
              {"time", "tv_start_conditions", "stderr", "tv_snapshot", "snapshot_stderr", "tv_versus_final",
               "versus_final_stderr"},
              {}};
  for (std::size_t i = 0; i < m.start_conditions.size(); ++i) {
    curve.rows.push_back({fmt(m.start_conditions[i].time), fmt(m.start_conditions[i].tv),
                          fmt(m.start_conditions[i].error), fmt(m.snapshot_start_conditions[i].tv),
                          fmt(m.snapshot_start_conditions[i].error), fmt(m.versus_final[i].tv),
                          fmt(m.versus_final[i].error)});
  }
  auto pooled = pooled_measure(a, c.pattern_width, c.t / 2.0, c.t, c.pool_spacing);
  Table patterns{"patterns.csv", {"pattern", "count", "frequency"}, {}};
  for (const auto& [bits, count] : pooled.counts()) {
    patterns.rows.push_back({Pattern{bits, c.pattern_width}.to_string(), fmt(count), fmt(pooled.frequency(bits))});
  }
  out.tables = front_tables(a);
  out.tables.push_back(curve);
  out.tables.push_back(patterns);
}

inline void gap_stats(const ExperimentConfig& c, std::uint64_t seed, Output& out) {
  auto spec = front_spec(c, seed);
  for (auto l : c.gap_lengths) spec.gaps.push_back({c.gap_offset, c.gap_offset + c.gap_span, l});
  const auto runs = run_front_ensemble(spec, c.n, c.workers);
  const auto g = analyze_gaps(runs, spec.probe_times, c.gap_lengths);
  json rows = json::array();
  Table t{"gap_frequencies.csv", {"time", "l", "violation_frequency", "stderr"}, {}};
  for (std::size_t i = 0; i < g.probe_times.size(); ++i) {
    for (std::size_t k = 0; k < g.lengths.size(); ++k) {
      rows.push_back({{"time", g.probe_times[i]}, {"l", g.lengths[k]}, {"violation", to_json(g.violation[i][k])}});
      t.rows.push_back({fmt(g.probe_times[i]), fmt(g.lengths[k]), fmt(g.violation[i][k].value),
                        fmt(g.violation[i][k].stderr_)});
    }
  }
  out.summary["results"] = {{"box", {c.gap_offset, c.gap_offset + c.gap_span}},
                            {"violation_frequencies", rows},
                            {"strictly_decreasing_at_t", g.strictly_decreasing_at_t}};
  out.tables = front_tables(runs);
  out.tables.push_back(front_probe_table(runs, spec.probe_times, spec.pattern_width, spec.gaps));
  out.tables.push_back(t);
}

inline void contact_survival(const ExperimentConfig& c, std::uint64_t seed, Output& out) {
  const ModelParams params{ModelKind::kTCP, c.q};
  const InitialCondition init = parse_init(c.init, c.q, seed);
  const auto runs = parallel_map(static_cast<std::size_t>(c.n), c.workers, [&](std::size_t i) {
    return run_contact(params, init, c.t, seed, i, c.window, {c.live_set, true});
  });
  const auto a = analyze_contact(runs);
  out.summary["results"] = to_json(a);
  Table t{"runs.csv", {"run_id", "survived", "extinction_time", "last_zero", "rings"}, {}};
  for (std::size_t i = 0; i < runs.size(); ++i) {
    t.rows.push_back({fmt(static_cast<std::uint64_t>(i)), fmt(runs[i].survived),
                      runs[i].survived ? std::string() : fmt(runs[i].time),
                      runs[i].survived ? std::string() : fmt(runs[i].last_zero), fmt(runs[i].rings)});
  }
  out.tables = {t};
}

inline void restart(const ExperimentConfig& c, std::uint64_t seed, Output& out) {
  const ModelParams params{ModelKind::kFA1f, c.q};
  const InitialCondition init = parse_init(c.init, c.q, seed);
  const EngineOptions engine{c.live_set, true};
  const auto outs = run_restart_ensemble(params, init, c.t, c.max_restarts, c.n, seed, c.workers, c.window, engine);
  const auto a = analyze_restart(outs);
  json res = to_json(a);
  res["horizon"] = c.t;
  if (c.horizon_sensitivity) {
    const auto half = run_restart_ensemble(params, init, c.t / 2.0, c.max_restarts, c.n, seed, c.workers, c.window,
                                           engine);
    res["half_horizon"] = to_json(analyze_restart(half));
  }
  out.summary["results"] = res;
  Table runs{"runs.csv", {"run_id", "L", "T", "Y", "survived", "horizon"}, {}};
  Table log{"restarts.csv", {"run_id", "i", "U", "Z", "X"}, {}};
  for (std::size_t i = 0; i < outs.size(); ++i) {
    const auto& o = outs[i];
    runs.rows.push_back({fmt(static_cast<std::uint64_t>(i)), fmt(o.L), fmt(o.T), fmt(o.Y), fmt(o.survived),
                         fmt(o.horizon)});
    for (std::size_t k = 0; k < o.restart_log.size(); ++k) {
      const auto& e = o.restart_log[k];
      log.rows.push_back({fmt(static_cast<std::uint64_t>(i)), fmt(static_cast<std::uint64_t>(k + 1)), fmt(e.U),
                          fmt(e.Z), fmt(e.X)});
    }
  }
  out.tables = {runs, log};
}

inline void oracle_check(const ExperimentConfig& c, std::uint64_t seed, Output& out) {
  const auto sweep = oracle_sweep(c.oracle_max_sites, c.oracle_qs);
  double db = 0.0, st = 0.0, rs = 0.0;
  Table t{"oracle_sweep.csv", {"sites", "q", "detailed_balance", "stationarity", "row_sum"}, {}};
  for (const auto& r : sweep) {
    db = std::max(db, r.detailed_balance);
    st = std::max(st, r.stationarity);
    rs = std::max(rs, r.row_sum);
    t.rows.push_back({fmt(r.sites), fmt(r.q), fmt(r.detailed_balance), fmt(r.stationarity), fmt(r.row_sum)});
  }
  const oracle::GeneratorMatrix tcp(std::min(c.oracle_max_sites, 4), {ModelKind::kTCP, c.q}, oracle::Boundary::kZero);
  const double tcp_violation = oracle::detailed_balance_violation(tcp, 1.0 - c.q);

  const oracle::GeneratorMatrix g(c.oracle_sites, {ModelKind::kFA1f, c.q}, oracle::Boundary::kZero);
  const auto d1 = oracle::transient_distribution(g, g.dimension() - 1, c.oracle_time);
  const auto d2 = oracle::transient_distribution(g, g.dimension() - 1, c.oracle_time, 2.0 * g.max_exit_rate());
  double rate_gap = 0.0;
  for (std::size_t s = 0; s < d1.size(); ++s) rate_gap = std::max(rate_gap, std::abs(d1[s] - d2[s]));

  const auto mc = engine_vs_oracle(c.q, c.oracle_sites, c.oracle_time, c.n, seed, c.workers, c.live_set);
  Table law{"transient_law.csv", {"state", "exact", "empirical"}, {}};
  for (std::size_t s = 0; s < mc.exact.size(); ++s) {
    law.rows.push_back({fmt(static_cast<std::uint64_t>(s)), fmt(mc.exact[s]), fmt(mc.empirical[s])});
  }
  out.summary["results"] = {{"max_detailed_balance_violation", db},
                            {"max_stationarity_violation", st},
                            {"max_row_sum", rs},
                            {"tcp_detailed_balance_violation", tcp_violation},
                            {"uniformization_rate_gap", rate_gap},
                            {"engine_vs_exact_tv", mc.tv},
                            {"engine_runs", c.n},
                            {"engine_sites", c.oracle_sites},
                            {"engine_time", c.oracle_time}};
  out.tables = {t, law};
}

inline void drift_diagnostic_kind(const ExperimentConfig& c, std::uint64_t seed, Output& out) {
  std::vector<double> times = c.probe_times.empty() ? std::vector<double>{1.0, 5.0, 20.0} : c.probe_times;
  std::sort(times.begin(), times.end());
  const auto samples = drift_samples(c.q, c.box_half, 0, times, c.n, seed, c.workers, c.live_set);
  const double xi0 = static_cast<double>(c.box_half + 1);  // all ones: the boundary is the nearest zero
  const auto as_stated = drift_diagnostic(times, samples, c.theta, c.q, static_cast<double>(c.box_half));
  const auto from_xi0 = drift_diagnostic(times, samples, c.theta, c.q, xi0);
  json rows = json::array();
  Table t{"drift.csv", {"time", "mean_theta_xi", "stderr", "bound_theta_h", "bound_theta_xi0"}, {}};
  for (std::size_t i = 0; i < times.size(); ++i) {
    rows.push_back({{"time", times[i]},
                    {"mean_theta_xi", to_json(as_stated[i].mean_theta_xi)},
                    {"bound_theta_h", as_stated[i].bound},
                    {"holds_theta_h", as_stated[i].holds},
                    {"bound_theta_xi0", from_xi0[i].bound},
                    {"holds_theta_xi0", from_xi0[i].holds}});
    t.rows.push_back({fmt(times[i]), fmt(as_stated[i].mean_theta_xi.value), fmt(as_stated[i].mean_theta_xi.stderr_),
                      fmt(as_stated[i].bound), fmt(from_xi0[i].bound)});
  }
  out.summary["results"] = {{"lambda", drift_rate(c.theta, c.q)},
                            {"asymptote", drift_asymptote(c.theta, c.q)},
                            {"xi0", xi0},
                            {"probes", rows},
                            {"bound_held_theta_h", drift_bound_held(as_stated)},
                            {"bound_held_theta_xi0", drift_bound_held(from_xi0)}};
  out.tables = {t};
}

inline void coupling(const ExperimentConfig& c, std::uint64_t seed, Output& out) {
  const InitialCondition init = parse_init(c.init, c.q, seed);
  const auto tot = run_coupling(c.q, init, c.t, c.n, seed, c.workers, c.window, {c.live_set, true});
  out.summary["results"] = {{"runs", tot.runs}, {"updates", tot.updates}, {"order_violations", tot.order_violations}};
}

inline void determinism(const ExperimentConfig& c, std::uint64_t seed, Output& out) {
  const InitialCondition init = parse_init(c.init, c.q, seed);
  const auto rep = check_determinism(c.q, init, c.t, c.n, seed, c.compare_workers, c.shift, c.window);
  out.summary["results"] = {{"seeds", rep.seeds},
                            {"worker_mismatches", rep.worker_mismatches},
                            {"live_set_mismatches", rep.live_set_mismatches},
                            {"shift_mismatches", rep.shift_mismatches}};
}

}  // namespace detail

/// Runs one experiment. Invalid configs yield exit code 2 and no results;
/// window failures after the last widening yield exit code 3.
inline Output run(const ExperimentConfig& c) {
  Output out;
  const auto findings = validate(c);
  const std::uint64_t seed = has_errors(findings) ? 0 : resolve_seed(c);
  out.summary["schema_version"] = kSchemaVersion;
  out.summary["config"] = config_json(c, seed);
  json fj = json::array();
  for (const auto& f : findings) fj.push_back({{"level", f.level}, {"message", f.message}});
  out.summary["findings"] = fj;
  if (has_errors(findings)) {
    out.summary["status"] = "invalid-config";
    out.exit_code = 2;
    return out;
  }
  try {
    switch (c.kind) {
      case Kind::kSimulate: detail::simulate(c, seed, out); break;
      case Kind::kVelocity: detail::velocity(c, seed, out); break;
      case Kind::kClt: detail::clt(c, seed, out); break;
      case Kind::kInvariantMeasure: detail::invariant_measure(c, seed, out); break;
      case Kind::kContactSurvival: detail::contact_survival(c, seed, out); break;
      case Kind::kRestart: detail::restart(c, seed, out); break;
      case Kind::kOracleCheck: detail::oracle_check(c, seed, out); break;
      case Kind::kGapStats: detail::gap_stats(c, seed, out); break;
      case Kind::kDriftDiagnostic: detail::drift_diagnostic_kind(c, seed, out); break;
      case Kind::kCoupling: detail::coupling(c, seed, out); break;
      case Kind::kDeterminism: detail::determinism(c, seed, out); break;
    }
    out.summary["status"] = "ok";
  } catch (const WindowTooSmallError& e) {
    out.summary["status"] = "window-too-small";
    out.summary["error"] = e.what();
    out.exit_code = 3;
  } catch (const std::exception& e) {
    out.summary["status"] = "error";
    out.summary["error"] = e.what();
    out.exit_code = 1;
  }
  return out;
}

/// Writes summary.json and the tables into `dir`. The timestamp sits under
/// its own key so that summaries of identical configs differ only there.
inline void write_output(const Output& out, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json summary = out.summary;
  summary["generated"] = {{"timestamp", utc_timestamp()}};
  std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';
  for (const auto& t : out.tables) std::ofstream(dir / t.name) << t.str();
}

}  // namespace kcm::experiments
