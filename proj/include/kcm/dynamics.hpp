#pragma once

// Event-driven FA-1f and threshold contact dynamics under the graphical
// construction.
//
// Every site of the window carries its own Poisson clock; the engine pops the
// globally earliest ring (ties broken by ascending site) and updates each
// process to the ring's coin when that process's constraint allows it. All
// processes held by one engine read the same rings and coins, which is the
// basic coupling.
//
// With the live set enabled, a site is kept in the queue only while some coin
// value could change it in some process (it lies within distance 1 of a zero,
// and the coin law allows the relevant flip): elsewhere every ring is a
// no-op. A dormant site's clock is fast-forwarded past the current event when
// it wakes up, so (site, ring index) alignment is the same as in
// the process-every-ring baseline and trajectories agree bit-for-bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kcm/lattice.hpp"
#include "kcm/randomness.hpp"

namespace kcm {

enum class ModelKind { kFA1f, kTCP };

inline const char* to_string(ModelKind k) { return k == ModelKind::kFA1f ? "FA1f" : "TCP"; }

struct ModelParams {
  ModelKind kind = ModelKind::kFA1f;
  double q = 0.9;

  /// Critical rate of the classical contact process on Z.
  static constexpr double kLambdaC = 1.6494;
  /// Critical q/p of the threshold contact process on Z (reference only).
  static constexpr double kLambdaCTcp = 1.74;

  double p() const noexcept { return 1.0 - q; }
  static constexpr double q_bar() noexcept { return 2.0 * kLambdaC / (1.0 + 2.0 * kLambdaC); }

  void validate() const {
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("q must lie in [0,1]");
  }
};

/// Whether an update of site x to `coin` is permitted for the given model.
inline bool update_allowed(ModelKind kind, const SpinConfig& s, std::int64_t x, int coin) noexcept {
  const bool empty_neighbor = s[x - 1] == 0 || s[x + 1] == 0;
  if (kind == ModelKind::kFA1f) return empty_neighbor;
  return coin == 1 || empty_neighbor;
}

/// Flip rate of site x.
inline double rate(const ModelParams& params, const SpinConfig& s, std::int64_t x) {
  const double c = 1.0 - static_cast<double>(s[x - 1] * s[x + 1]);
  const int spin = s[x];
  if (params.kind == ModelKind::kFA1f) return c * (params.q * spin + params.p() * (1 - spin));
  return c * params.q * spin + params.p() * (1 - spin);
}

struct Change {
  double time;
  std::int64_t site;
  std::uint64_t ring;
  std::size_t layer;
  int old_value;
  int new_value;
};

struct EngineOptions {
  bool live_set = true;
  /// Throw WindowTooSmallError when a sentinel site changes.
  bool sentinel_check = true;
};

struct Layer {
  ModelKind kind;
  SpinConfig config;
};

class Engine {
 public:
  Engine(std::vector<Layer> layers, ClockCollection clocks, double t0 = 0.0, EngineOptions options = {})
      : layers_(std::move(layers)), options_(options), now_(t0) {
    if (layers_.empty()) throw std::invalid_argument("engine needs at least one process");
    window_ = layers_.front().config.window();
    for (const auto& l : layers_) {
      if (!(l.config.window() == window_)) throw std::invalid_argument("coupled processes must share a window");
    }
    zeros_.resize(layers_.size());
    fronts_.resize(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      zeros_[i] = layers_[i].config.count_zeros();
      fronts_[i] = layers_[i].config.leftmost_zero();
    }
    restart_clocks(std::move(clocks), 0.0);
  }

  /// Discards all pending rings and drives the dynamics from now on with the
  /// rings origin + (E_{x,1} + ... + E_{x,n}) of `clocks`.
  void restart_clocks(ClockCollection clocks, double origin) {
    clocks_ = std::move(clocks);
    origin_ = origin;
    can_fill_ = clocks_.p() > 0.0;
    can_empty_ = clocks_.p() < 1.0;
    const auto n = static_cast<std::size_t>(window_.size());
    next_ring_.assign(n, 0);
    next_rel_.assign(n, 0.0);
    next_coin_u_.assign(n, 0.0);
    in_heap_.assign(n, 0);
    heap_ = {};
    for (std::int64_t x = window_.lo; x <= window_.hi; ++x) {
      if (!options_.live_set || active(x)) schedule(x, now_, std::numeric_limits<std::int64_t>::max());
    }
  }

  /// Replaces the configuration of one process (same window required).
  void reset_layer(std::size_t layer, SpinConfig config) {
    if (!(config.window() == window_)) throw std::invalid_argument("window mismatch on reset");
    layers_.at(layer).config = std::move(config);
    zeros_[layer] = layers_[layer].config.count_zeros();
    fronts_[layer] = layers_[layer].config.leftmost_zero();
    if (options_.live_set) {
      for (std::int64_t x = window_.lo; x <= window_.hi; ++x) wake(x, now_, std::numeric_limits<std::int64_t>::max());
    }
  }

  /// Processes every ring with time <= t1. `observer(const Change&)` is called
  /// for every spin that changes; returning true stops the run after the
  /// current ring, leaving now() at that ring's time.
  template <class Observer>
  bool run_until(double t1, Observer&& observer) {
    while (!heap_.empty()) {
      const Item top = heap_.top();
      if (top.time > t1) break;
      heap_.pop();
      const std::int64_t x = top.site;
      const std::size_t i = idx(x);
      in_heap_[i] = 0;
      now_ = top.time;
      const std::uint64_t n = next_ring_[i];
      ++rings_;

      if (options_.live_set && !active(x)) {
        advance(x);
        continue;
      }

      const int coin = clocks_.coin_from_uniform(next_coin_u_[i]);
      // Constraints are read before any process is updated; observers see
      // the state after the whole ring.
      changed_.clear();
      for (std::size_t l = 0; l < layers_.size(); ++l) {
        const SpinConfig& s = layers_[l].config;
        if (s[x] == coin || !update_allowed(layers_[l].kind, s, x, coin)) continue;
        if (options_.sentinel_check && s.in_sentinel(x)) {
          throw WindowTooSmallError("sentinel site " + std::to_string(x) + " changed at t=" + std::to_string(now_));
        }
        changed_.push_back(l);
      }
      for (std::size_t l : changed_) {
        layers_[l].config.set(x, coin);
        update_bookkeeping(l, x, coin);
      }
      const bool changed = !changed_.empty();
      bool stop = false;
      for (std::size_t l : changed_) {
        if (observer(Change{now_, x, n, l, 1 - coin, coin})) stop = true;
      }
      advance(x);
      schedule_existing(x);
      if (changed && options_.live_set) {
        wake(x - 1, now_, x);
        wake(x + 1, now_, x);
      }
      if (stop) return true;
    }
    now_ = std::max(now_, t1);
    return false;
  }

  void run_until(double t1) {
    run_until(t1, [](const Change&) { return false; });
  }

  double now() const noexcept { return now_; }
  const SpinConfig& config(std::size_t layer = 0) const { return layers_.at(layer).config; }
  ModelKind kind(std::size_t layer = 0) const { return layers_.at(layer).kind; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  std::int64_t zero_count(std::size_t layer = 0) const { return zeros_.at(layer); }
  std::optional<std::int64_t> leftmost_zero(std::size_t layer = 0) const { return fronts_.at(layer); }
  const ClockCollection& clocks() const noexcept { return clocks_; }
  std::uint64_t rings_processed() const noexcept { return rings_; }
  const Interval& window() const noexcept { return window_; }

 private:
  struct Item {
    double time;
    std::int64_t site;
    bool operator>(const Item& o) const noexcept {
      return time > o.time || (time == o.time && site > o.site);
    }
  };

  std::size_t idx(std::int64_t x) const noexcept { return static_cast<std::size_t>(x - window_.lo); }

  /// Whether some coin value would change site x in some process.
  bool active(std::int64_t x) const noexcept {
    for (const auto& l : layers_) {
      const bool empty_neighbor = l.config[x - 1] == 0 || l.config[x + 1] == 0;
      if (l.config[x] == 0) {
        if (can_fill_ && (empty_neighbor || l.kind == ModelKind::kTCP)) return true;
      } else if (can_empty_ && empty_neighbor) {
        return true;
      }
    }
    return false;
  }

  void advance(std::int64_t x) {
    const std::size_t i = idx(x);
    ++next_ring_[i];
    const RingDraw d = clocks_.draw(x, next_ring_[i]);
    next_rel_[i] += d.increment;
    next_coin_u_[i] = d.coin_uniform;
  }

  double next_time(std::size_t i) const noexcept { return origin_ + next_rel_[i]; }

  /// Moves the clock of x past every ring ordered before (t, tie_site), then
  /// queues it.
  void schedule(std::int64_t x, double t, std::int64_t tie_site) {
    const std::size_t i = idx(x);
    if (next_ring_[i] == 0) advance(x);
    while (next_time(i) < t || (next_time(i) == t && x < tie_site)) advance(x);
    heap_.push({next_time(i), x});
    in_heap_[i] = 1;
  }

  void schedule_existing(std::int64_t x) {
    const std::size_t i = idx(x);
    if (options_.live_set && !active(x)) return;
    heap_.push({next_time(i), x});
    in_heap_[i] = 1;
  }

  void wake(std::int64_t x, double t, std::int64_t tie_site) {
    if (!window_.contains(x) || in_heap_[idx(x)] || !active(x)) return;
    schedule(x, t, tie_site);
  }

  void update_bookkeeping(std::size_t l, std::int64_t x, int value) {
    auto& f = fronts_[l];
    if (value == 0) {
      ++zeros_[l];
      if (!f || x < *f) f = x;
    } else {
      --zeros_[l];
      if (zeros_[l] == 0) {
        f.reset();
      } else if (f && *f == x) {
        f = layers_[l].config.next_zero(x + 1);
      }
    }
  }

  std::vector<Layer> layers_;
  EngineOptions options_;
  Interval window_;
  ClockCollection clocks_;
  double origin_ = 0.0;
  bool can_fill_ = true;
  bool can_empty_ = true;
  double now_ = 0.0;
  std::vector<std::uint64_t> next_ring_;
  std::vector<double> next_rel_;
  std::vector<double> next_coin_u_;
  std::vector<std::uint8_t> in_heap_;
  std::vector<std::size_t> changed_;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap_;
  std::vector<std::int64_t> zeros_;
  std::vector<std::optional<std::int64_t>> fronts_;
  std::uint64_t rings_ = 0;
};

// ---------------------------------------------------------------------------
// Window policy

struct WindowPolicy {
  double c_left = 5.0;
  double c_right = 5.0;
  std::int64_t margin = 50;
  int max_widenings = 3;
};

/// [-c_left t - m, support + c_right t + m] for an initial condition whose
/// zeros lie in [0, support].
inline Interval adequate_window(std::int64_t support_hi, double horizon, const WindowPolicy& policy) {
  const auto left = static_cast<std::int64_t>(std::ceil(policy.c_left * horizon)) + 2 * policy.margin;
  const auto right = static_cast<std::int64_t>(std::ceil(policy.c_right * horizon)) + 2 * policy.margin;
  return {-left, std::max<std::int64_t>(support_hi, 0) + right};
}

/// Calls fn(window) and, while it throws WindowTooSmallError, doubles the
/// safety speeds and retries. Keyed randomness makes the rerun replay the
/// same rings on the enlarged window.
template <class Fn>
auto with_widening(std::int64_t support_hi, double horizon, WindowPolicy policy, Fn&& fn) {
  for (int attempt = 0;; ++attempt) {
    try {
      return fn(adequate_window(support_hi, horizon, policy), policy);
    } catch (const WindowTooSmallError&) {
      if (attempt >= policy.max_widenings) throw;
      policy.c_left *= 2.0;
      policy.c_right *= 2.0;
    }
  }
}

// ---------------------------------------------------------------------------
// Single-process evolution with probes

struct GapProbe {
  std::int64_t a;  ///< offsets relative to the front
  std::int64_t b;
  std::int64_t l;
};

struct DistanceProbe {
  std::int64_t x;
  Interval box;
};

struct ProbePlan {
  std::vector<double> times;
  bool front = true;
  int pattern_width = -1;  ///< negative: no pattern probe
  std::vector<GapProbe> gaps;
  std::vector<DistanceProbe> distances;
};

struct ProbeRecord {
  double time;
  std::string observable;
  double value;
};

struct EvolveResult {
  SpinConfig config;
  FrontPath path;
  std::vector<ProbeRecord> probes;
  std::uint64_t rings = 0;
};

inline std::vector<ProbeRecord> sample_probes(const SpinConfig& s, double t, const ProbePlan& plan) {
  std::vector<ProbeRecord> out;
  const bool has_front = s.exterior() == 1 && s.leftmost_zero().has_value();
  const std::int64_t x = has_front ? front(s) : 0;
  if (plan.front && has_front) out.push_back({t, "front", static_cast<double>(x)});
  if (plan.pattern_width >= 0 && has_front) {
    out.push_back({t, "pattern_w" + std::to_string(plan.pattern_width),
                   static_cast<double>(read_pattern(s, x, plan.pattern_width).bits)});
  }
  for (const auto& g : plan.gaps) {
    if (!has_front) break;
    out.push_back({t, "gap_" + std::to_string(g.a) + "_" + std::to_string(g.b) + "_" + std::to_string(g.l),
                   gap_event(s, x + g.a, x + g.b, g.l) ? 1.0 : 0.0});
  }
  for (const auto& d : plan.distances) {
    out.push_back({t, "xi_" + std::to_string(d.x), static_cast<double>(distance_to_zero(s, d.x, d.box))});
  }
  return out;
}

/// Runs one process from `config` at time t0 to t1 under `clocks`, recording
/// the front path (when the exterior is occupied) and sampling probes at the
/// requested times.
template <class Observer>
EvolveResult evolve(SpinConfig config, const ModelParams& params, const ClockCollection& clocks, double t0,
                    double t1, const ProbePlan& plan, EngineOptions options, Observer&& observer) {
  params.validate();
  if (t0 > t1) throw std::invalid_argument("evolve requires t0 <= t1");
  const bool track_front = config.exterior() == 1;
  Engine engine({Layer{params.kind, std::move(config)}}, clocks, t0, options);
  EvolveResult result;
  if (track_front && engine.leftmost_zero()) result.path.record(t0, *engine.leftmost_zero());

  std::vector<double> times = plan.times;
  std::sort(times.begin(), times.end());
  auto on_change = [&](const Change& c) {
    if (track_front) {
      const auto f = engine.leftmost_zero();
      if (f && (result.path.empty() || *f != result.path.positions().back())) result.path.record(c.time, *f);
    }
    observer(c, engine.config());
    return false;
  };
  for (double t : times) {
    if (t < t0 || t > t1) continue;
    engine.run_until(t, on_change);
    auto recs = sample_probes(engine.config(), t, plan);
    result.probes.insert(result.probes.end(), recs.begin(), recs.end());
  }
  engine.run_until(t1, on_change);
  result.rings = engine.rings_processed();
  result.config = engine.config();
  return result;
}

inline EvolveResult evolve(SpinConfig config, const ModelParams& params, const ClockCollection& clocks, double t0,
                           double t1, const ProbePlan& plan = {}, EngineOptions options = {}) {
  return evolve(std::move(config), params, clocks, t0, t1, plan, options, [](const Change&, const SpinConfig&) {});
}

/// FA-1f restricted to `box` with empty boundary sites.
inline SpinConfig evolve_finite_volume(const SpinConfig& config, const ModelParams& params, Interval box,
                                       const ClockCollection& clocks, double t0, double t1,
                                       bool live_set = true) {
  SpinConfig local(box, 0, 0);
  for (std::int64_t x = box.lo; x <= box.hi; ++x) local.set(x, config[x]);
  Engine engine({Layer{params.kind, std::move(local)}}, clocks, t0, {live_set, false});
  engine.run_until(t1);
  return engine.config();
}

// ---------------------------------------------------------------------------
// Basic coupling of two processes

struct CoupledPair {
  SpinConfig fa;
  SpinConfig tcp;
  bool order_ok = true;
  std::uint64_t order_violations = 0;
  std::uint64_t updates = 0;
};

class OrderViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Drives `pair.fa` (kind of params_fa) and `pair.tcp` (kind of params_tcp)
/// with the same rings and coins. The order sigma <= eta is checked at every
/// changed site; a violation throws unless `count_only` is set.
inline CoupledPair evolve_coupled(CoupledPair pair, const ModelParams& params_fa, const ModelParams& params_tcp,
                                  const ClockCollection& clocks, double t0, double t1, EngineOptions options = {},
                                  bool count_only = false) {
  if (std::abs(params_fa.q - params_tcp.q) > 0.0) {
    throw std::invalid_argument("basic coupling uses one coin law: q must agree");
  }
  if (!pair.fa.leq(pair.tcp)) throw std::invalid_argument("coupling requires fa <= tcp at start");
  Engine engine({Layer{params_fa.kind, std::move(pair.fa)}, Layer{params_tcp.kind, std::move(pair.tcp)}}, clocks,
                t0, options);
  std::uint64_t violations = 0;
  std::uint64_t updates = 0;
  engine.run_until(t1, [&](const Change& c) {
    ++updates;
    if (engine.config(0)[c.site] > engine.config(1)[c.site]) {
      ++violations;
      if (!count_only) throw OrderViolation("order violated at site " + std::to_string(c.site));
    }
    return false;
  });
  pair.fa = engine.config(0);
  pair.tcp = engine.config(1);
  pair.order_violations += violations;
  pair.order_ok = pair.order_ok && violations == 0;
  pair.updates += updates;
  return pair;
}

// ---------------------------------------------------------------------------
// Contact process extinction

struct Extinction {
  std::optional<double> time;  ///< nullopt: survived to the horizon
  std::optional<std::int64_t> last_zero;
  std::uint64_t rings = 0;
};

/// First time the threshold contact process holds no zero, or "survived".
inline Extinction extinction_time(const SpinConfig& eta0, const ModelParams& params, const ClockCollection& clocks,
                                  double horizon, EngineOptions options = {}) {
  if (eta0.exterior() != 1) throw std::invalid_argument("extinction requires an occupied exterior");
  if (eta0.count_zeros() == 0) return {0.0, std::nullopt, 0};
  if (std::abs(clocks.p() - params.p()) > 1e-12) throw std::invalid_argument("clock coins do not match p");
  Engine engine({Layer{ModelKind::kTCP, eta0}}, clocks, 0.0, options);
  Extinction out;
  const bool died = engine.run_until(horizon, [&](const Change& c) {
    if (engine.zero_count() == 0) {
      out.last_zero = c.site;
      return true;
    }
    return false;
  });
  if (died) out.time = engine.now();
  out.rings = engine.rings_processed();
  return out;
}

}  // namespace kcm
