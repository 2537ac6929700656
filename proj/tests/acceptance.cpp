// Acceptance suite: one PASS/FAIL line per criterion, followed by indented
// detail lines. Exit status is nonzero when any criterion fails.
//
// The q = 0.9 front ensemble (500 runs to t = 2000) is simulated once and
// shared by the velocity, CLT, invariant-measure, gap and covariance checks;
// the velocity check uses its first 200 runs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "kcm/experiments.hpp"

namespace ex = kcm::experiments;
using namespace kcm;

namespace {

constexpr std::uint64_t kSeed = 20240601;
unsigned g_workers = 1;
int g_failures = 0;

class Criterion {
 public:
  Criterion(int id, std::string title) : id_(id), title_(std::move(title)), start_(std::chrono::steady_clock::now()) {}

  void detail(const char* fmt, ...) __attribute__((format(printf, 2, 3))) {
    char buf[512];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, args);
    va_end(args);
    details_.push_back(buf);
  }

  void require(bool ok) { ok_ = ok_ && ok; }

  void finish() {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::printf("[%s] #%d %s (%.1f s)\n", ok_ ? "PASS" : "FAIL", id_, title_.c_str(), secs);
    for (const auto& d : details_) std::printf("       %s\n", d.c_str());
    std::fflush(stdout);
    if (!ok_) ++g_failures;
  }

 private:
  int id_;
  std::string title_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> details_;
  bool ok_ = true;
};

const char* yes(bool b) { return b ? "yes" : "no"; }

void reversibility() {
  Criterion c(1, "reversibility oracle: FA-1f zero-boundary detailed balance, |L| <= 8");
  const auto rows = ex::oracle_sweep(8, {0.5, 0.77, 0.9, 1.0});
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max(worst, r.detailed_balance);
  c.detail("max violation %.3g over %zu generators (limit 1e-12)", worst, rows.size());
  c.require(worst < 1e-12);
  c.finish();
}

void engine_vs_oracle() {
  Criterion c(2, "engine vs oracle: |L| = 6, t = 1, q = 0.9, 1e5 runs, TV < 0.01");
  const auto cmp = ex::engine_vs_oracle(0.9, 6, 1.0, 100000, kSeed, g_workers, true);
  c.detail("TV = %.5f", cmp.tv);
  c.require(cmp.tv < 0.01);
  c.finish();
}

void monotone_coupling() {
  Criterion c(3, "monotone coupling: 1e3 FA-1f/TCP runs, q = 0.9, t = 200, zero order violations");
  BernoulliRight init;
  init.p = 0.1;
  init.seed = kSeed;
  const auto tot = ex::run_coupling(0.9, init, 200.0, 1000, kSeed, g_workers, {}, {});
  c.detail("runs %llu, spin updates %llu, violations %llu", static_cast<unsigned long long>(tot.runs),
           static_cast<unsigned long long>(tot.updates), static_cast<unsigned long long>(tot.order_violations));
  c.require(tot.order_violations == 0 && tot.runs == 1000);
  c.finish();
}

void jump_structure() {
  Criterion c(4, "front jump structure: 1e3 runs from delta0, q = 0.9, t = 500");
  ex::ExperimentConfig cfg;
  cfg.q = 0.9;
  cfg.t = 500.0;
  auto spec = ex::front_spec(cfg, kSeed);
  const auto runs = ex::run_front_ensemble(spec, 1000, g_workers);
  const auto a = ex::analyze_velocity(runs, cfg.t, cfg.q, spec.occupancy_from);
  const double z_minus = (a.minus_rate.value - cfg.q) / a.minus_rate.stderr_;
  const double z_plus = a.plus_intensity_gap.value / a.plus_intensity_gap.stderr_;
  c.detail("jumps: -1 %llu, +1 %llu, other %llu; +1 with sigma~(1)=0: %llu",
           static_cast<unsigned long long>(a.jumps.minus), static_cast<unsigned long long>(a.jumps.plus),
           static_cast<unsigned long long>(a.jumps.other),
           static_cast<unsigned long long>(a.jumps.plus_with_empty_right));
  c.detail("-1 rate %.5f +- %.5f vs q = 0.9 (z = %.2f)", a.minus_rate.value, a.minus_rate.stderr_, z_minus);
  c.detail("+1 intensity minus p * occupation on [t/2, t]: %.5f +- %.5f (z = %.2f)", a.plus_intensity_gap.value,
           a.plus_intensity_gap.stderr_, z_plus);
  c.require(a.unit_jump_fraction == 1.0 && a.plus_empty_right_fraction == 1.0);
  c.require(std::abs(z_minus) < 3.0 && std::abs(z_plus) < 3.0);
  c.finish();
}

struct MainEnsemble {
  std::vector<FrontRunRecord> delta;      // 500 runs from delta0
  std::vector<FrontRunRecord> bernoulli;  // independent Bernoulli-start runs
  FrontRunSpec spec;
};

MainEnsemble main_ensemble() {
  const double t0 = std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
  MainEnsemble m;
  ex::ExperimentConfig cfg;
  cfg.q = 0.9;
  cfg.t = 2000.0;
  m.spec = ex::front_spec(cfg, kSeed);
  m.spec.pattern_series = true;
  m.spec.probe_times = {1000.0, 2000.0};
  for (std::int64_t l : {5, 10, 20}) m.spec.gaps.push_back({5, 105, l});
  m.delta = ex::run_front_ensemble(m.spec, 500, g_workers);
  auto ref = m.spec;
  ref.seed = splitmix64(kSeed ^ 0xB5AD4ECEDA1CE2A9ull);
  ref.init = ex::parse_init("bernoulli", cfg.q, ref.seed);
  ref.gaps.clear();
  m.bernoulli = ex::run_front_ensemble(ref, 250, g_workers);
  const double t1 = std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
  std::printf("[info] q = 0.9 front ensembles: 500 delta0 + 250 Bernoulli runs to t = 2000 (%.1f s)\n", t1 - t0);
  return m;
}

void velocity_formula(const MainEnsemble& m) {
  Criterion c(5, "velocity formula: q = 0.9, t = 2000, 200 runs; q = 1 calibration");
  const std::vector<FrontRunRecord> first(m.delta.begin(), m.delta.begin() + 200);
  const auto a = ex::analyze_velocity(first, 2000.0, 0.9, m.spec.occupancy_from);
  c.detail("v_hat = %.5f +- %.5f; nu_hat[sigma~(1)=0] = %.5f +- %.5f", a.v_hat.value, a.v_hat.stderr_,
           a.nu_empty_at_1.value, a.nu_empty_at_1.stderr_);
  c.detail("residual v_hat - (p nu_hat - q) = %.5f, combined stderr %.5f", a.residual.value, a.residual.stderr_);
  c.require(a.v_hat.value < 0.0 && std::abs(a.residual.value) < 3.0 * a.residual.stderr_);

  ex::ExperimentConfig cal;
  cal.q = 1.0;
  cal.t = 100.0;
  auto spec = ex::front_spec(cal, kSeed);
  const auto runs = ex::run_front_ensemble(spec, 1000, g_workers);
  const auto b = ex::analyze_velocity(runs, cal.t, cal.q, spec.occupancy_from);
  c.detail("q = 1, t = 100, 1e3 runs: v_hat = %.5f +- %.5f (target -1.00 +- 0.01)", b.v_hat.value, b.v_hat.stderr_);
  c.require(std::abs(b.v_hat.value + 1.0) <= 0.01);
  c.finish();
}

void clt(const MainEnsemble& m) {
  Criterion c(6, "CLT: 500 runs, q = 0.9, t = 2000; q = 1 calibration");
  const auto a = ex::analyze_clt(m.delta, 2000.0, 100, 60, -1);
  c.detail("KS statistic %.4f, p-value %.4f (needs > 0.01)", a.ks.statistic, a.ks.p_value);
  c.detail("s2 direct %.4f +- %.4f, series %.4f +- %.4f (%zu lags), relative gap %.3f (needs <= 0.15)",
           a.s2_direct.value, a.s2_direct.stderr_, a.s2_series.s2.value, a.s2_series.s2.stderr_,
           a.s2_series.lags_used, a.relative_gap);
  c.require(a.ks.p_value > 0.01 && a.relative_gap <= 0.15);

  ex::ExperimentConfig cal;
  cal.q = 1.0;
  cal.t = 400.0;
  const auto runs = ex::run_front_ensemble(ex::front_spec(cal, kSeed), 500, g_workers);
  const auto b = ex::analyze_clt(runs, cal.t, 100, 10, -1);
  c.detail("q = 1, t = 400, 500 runs: s2 direct %.4f (target 1.00 +- 0.1), series %.4f, KS p %.4f",
           b.s2_direct.value, b.s2_series.s2.value, b.ks.p_value);
  c.require(std::abs(b.s2_direct.value - 1.0) <= 0.1);
  c.finish();
}

void invariant_measure(const MainEnsemble& m) {
  Criterion c(7, "invariant measure: pooled seen-from-front patterns, width 9");
  const auto a = ex::analyze_invariant_measure(m.delta, m.bernoulli, {250.0, 500.0, 1000.0, 2000.0}, 2000.0, 9, 10.0);
  const auto& half = a.versus_final[1];
  const auto& start = a.start_conditions.back();
  c.detail("t = 500 vs t = 2000: TV %.4f, limit 0.02 + 3 x %.4f = %.4f", half.tv, half.error, 0.02 + 3 * half.error);
  c.detail("delta0 vs Bernoulli at t = 2000: TV %.4f, limit %.4f", start.tv, 0.02 + 3 * start.error);
  std::string curve;
  for (const auto& p : a.start_conditions) {
    char buf[64];
    std::snprintf(buf, sizeof buf, " t=%g: %.4f (err %.4f, n=%llu/%llu);", p.time, p.tv, p.error,
                  static_cast<unsigned long long>(p.samples_a), static_cast<unsigned long long>(p.samples_b));
    curve += buf;
  }
  c.detail("delta0 vs Bernoulli TV by t:%s strictly decreasing: %s", curve.c_str(), yes(a.decreasing));
  c.detail("burn-in t/2 vs t/4 at t = 2000: TV %.4f (err %.4f)", a.burn_in.tv, a.burn_in.error);
  c.require(half.tv < 0.02 + 3 * half.error);
  c.require(start.tv < 0.02 + 3 * start.error);
  c.require(a.decreasing);
  c.finish();
}

void contact() {
  Criterion c(8, "contact criticality: TCP from delta0, t = 500, 1e3 runs");
  for (double q : {0.9, 0.5}) {
    const auto runs = parallel_map(1000, g_workers, [&](std::size_t i) {
      return ex::run_contact({ModelKind::kTCP, q}, Delta0{}, 500.0, kSeed, i, {}, {});
    });
    const auto a = ex::analyze_contact(runs);
    if (a.death_tail) {
      c.detail("q = %.1f: survival %.4f +- %.4f; %llu deaths, extinction-time tail rate %.4f, R^2 %.4f (%zu points)", q,
               a.survival.value, a.survival.stderr_, static_cast<unsigned long long>(a.deaths), a.death_tail->rate,
               a.death_tail->r_squared, a.death_tail->points);
    } else {
      c.detail("q = %.1f: survival %.4f; tail fit unavailable: %s", q, a.survival.value, a.tail_note.c_str());
    }
    c.require(q > 0.7 ? a.survival.value >= 0.2 : a.survival.value <= 0.01);
    c.require(a.death_tail && a.death_tail->r_squared >= 0.9);
  }
  c.finish();
}

void restart() {
  Criterion c(9, "restart coupling: q = 0.9, horizon 500, 1e3 outcomes");
  const auto outs =
      ex::run_restart_ensemble({ModelKind::kFA1f, 0.9}, Delta0{}, 500.0, 200, 1000, kSeed, g_workers, {}, {});
  const auto a = ex::analyze_restart(outs);
  c.detail("restarts %llu, anchor failures %llu, domination violations %llu, survived %llu/%llu",
           static_cast<unsigned long long>(a.restarts), static_cast<unsigned long long>(a.anchor_failures),
           static_cast<unsigned long long>(a.order_violations), static_cast<unsigned long long>(a.survived),
           static_cast<unsigned long long>(a.runs));
  auto show = [&](const char* what, const std::optional<TailFit>& f, double r2) {
    if (f) {
      c.detail("%s tail: rate %.4f, R^2 %.4f, %zu points (needs rate > 0, R^2 >= %.2f)", what, f->rate, f->r_squared,
               f->points, r2);
    } else {
      c.detail("%s tail: no fit (fewer than three resolved points)", what);
    }
    c.require(f && f->rate > 0.0 && f->r_squared >= r2);
  };
  c.detail("mean T %.4f, mean |Y| %.4f, mean L %.4f", a.mean_T.value, a.mean_abs_Y.value, a.mean_L.value);
  if (!a.note.empty()) c.detail("%s", a.note.c_str());
  c.require(a.anchor_failures == 0 && a.order_violations == 0);
  show("T", a.tail_T, 0.85);
  show("|Y|", a.tail_Y, 0.85);
  show("P(L > k)", a.tail_L, 0.9);
  c.finish();
}

void determinism() {
  Criterion c(10, "determinism and equivalence: 100 seeds");
  BernoulliRight init;
  init.p = 0.1;
  init.seed = kSeed;
  const auto rep = ex::check_determinism(0.9, init, 100.0, 100, kSeed, 4, 37, {});
  c.detail("worker-count mismatches %llu, live-set mismatches %llu (FA-1f, TCP, coupled), shift mismatches %llu",
           static_cast<unsigned long long>(rep.worker_mismatches),
           static_cast<unsigned long long>(rep.live_set_mismatches),
           static_cast<unsigned long long>(rep.shift_mismatches));
  c.require(rep.worker_mismatches == 0 && rep.live_set_mismatches == 0 && rep.shift_mismatches == 0);
  c.finish();
}

void gaps(const MainEnsemble& m) {
  Criterion c(11, "gap events: q = 0.9, t = 1000, box [5, 105] behind the front");
  const auto g = ex::analyze_gaps(m.delta, m.spec.probe_times, {5, 10, 20});
  const auto& at = g.violation.front();  // t = 1000
  c.detail("violation frequency l=5: %.4f, l=10: %.4f, l=20: %.4f (500 runs)", at[0].value, at[1].value,
           at[2].value);
  const bool strict = at[0].value > at[1].value && at[1].value > at[2].value;
  c.detail("strictly decreasing: %s; l=20 below 0.05: %s", yes(strict), yes(at[2].value < 0.05));
  c.require(strict && at[2].value < 0.05);
  c.finish();
}

void covariance(const MainEnsemble& m) {
  Criterion c(12, "covariance decay: q = 0.9, 500 runs, Cov(xi_100, xi_100+k)");
  const auto a = ex::analyze_clt(m.delta, 2000.0, 100, 50, -1);
  c.detail("Var(xi_100) = %.4f; Cov at k=1: %.4f +- %.4f", a.covariances[0].value, a.covariances[1].value,
           a.covariances[1].stderr_);
  if (a.first_quiet_lag) {
    c.detail("first lag with |Cov| < 2 stderr: k = %lld", static_cast<long long>(*a.first_quiet_lag));
  } else {
    c.detail("no lag up to 50 with |Cov| < 2 stderr");
  }
  c.require(a.first_quiet_lag && *a.first_quiet_lag <= 50);
  c.finish();
}

void drift() {
  Criterion c(13, "drift diagnostic: q = 0.9, theta = 1.2, box [-20, 20], x = 0, 1e3 runs");
  const std::vector<double> times{1.0, 5.0, 20.0};
  const auto samples = ex::drift_samples(0.9, 20, 0, times, 1000, kSeed, g_workers, true);
  const auto stated = drift_diagnostic(times, samples, 1.2, 0.9, 20.0);
  const auto exact = drift_diagnostic(times, samples, 1.2, 0.9, 21.0);
  c.detail("lambda = %.4f, asymptote = %.4f", drift_rate(1.2, 0.9), drift_asymptote(1.2, 0.9));
  for (std::size_t i = 0; i < times.size(); ++i) {
    c.detail("t = %g: E[theta^xi] = %.4f +- %.4f; bound with theta^20: %.4f (%s); with theta^xi(sigma) = theta^21: "
             "%.4f (%s)",
             times[i], stated[i].mean_theta_xi.value, stated[i].mean_theta_xi.stderr_, stated[i].bound,
             stated[i].holds ? "holds" : "violated", exact[i].bound, exact[i].holds ? "holds" : "violated");
  }
  c.require(drift_bound_held(stated));
  c.finish();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) g_workers = static_cast<unsigned>(std::max(1, std::atoi(argv[1])));
  std::printf("acceptance suite, seed %llu, %u worker(s)\n", static_cast<unsigned long long>(kSeed), g_workers);
  reversibility();
  engine_vs_oracle();
  monotone_coupling();
  jump_structure();
  const auto m = main_ensemble();
  velocity_formula(m);
  clt(m);
  invariant_measure(m);
  contact();
  restart();
  determinism();
  gaps(m);
  covariance(m);
  drift();
  std::printf("%d criterion/criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
