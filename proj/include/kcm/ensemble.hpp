#pragma once

// Independent trajectories fanned out over a worker pool, and the per-run
// record of an FA-1f front trajectory.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <type_traits>
#include <vector>

#include "kcm/dynamics.hpp"
#include "kcm/lattice.hpp"
#include "kcm/restart.hpp"

namespace kcm {

/// results[i] = fn(i) for i < n, evaluated by `workers` threads. The result
/// does not depend on the number of workers.
template <class Fn>
auto parallel_map(std::size_t n, unsigned workers, Fn&& fn) {
  using R = std::invoke_result_t<Fn&, std::size_t>;
  std::vector<R> results(n);
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) results[i] = fn(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          results[i] = fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return results;
}

struct JumpStats {
  std::uint64_t minus = 0;
  std::uint64_t plus = 0;
  std::uint64_t plus_with_empty_right = 0;  ///< +1 jumps with sigma~(1) = 0 before the jump
  std::uint64_t other = 0;                  ///< jumps of any other size

  JumpStats& operator+=(const JumpStats& o) {
    minus += o.minus;
    plus += o.plus;
    plus_with_empty_right += o.plus_with_empty_right;
    other += o.other;
    return *this;
  }
};

struct FrontRunSpec {
  ModelParams params;
  InitialCondition init = Delta0{};
  double horizon = 100.0;
  std::vector<double> probe_times;
  int pattern_width = 9;
  std::vector<GapProbe> gaps;
  /// Time from which the occupation time of {sigma~(1) = 0} and the +1
  /// jumps are accumulated.
  double occupancy_from = 0.0;
  /// Record the seen-from-front pattern at every integer time.
  bool pattern_series = false;
  EngineOptions engine{};
  WindowPolicy window{};
  std::uint64_t seed = 0;
};

struct FrontRunRecord {
  std::uint64_t run_id = 0;
  std::vector<std::int64_t> front_at_integer;  ///< X(0), X(1), ..., X(floor(horizon))
  std::int64_t final_front = 0;
  std::vector<Pattern> patterns;           ///< one per probe time (width >= 0)
  std::vector<std::vector<bool>> gap_ok;   ///< [probe][gap probe]: in H(...)
  std::vector<std::uint64_t> pattern_at_integer;  ///< bits of the pattern at t = 1, 2, ... (if requested)
  double empty_right_time = 0.0;           ///< time with sigma~(1) = 0 in [occupancy_from, horizon]
  std::uint64_t plus_after = 0;            ///< +1 jumps at times >= occupancy_from
  JumpStats jumps;
  std::uint64_t rings = 0;
  Interval window;
  FrontPath path;
};

using ChangeSink = std::function<void(const Change&, std::int64_t front)>;

/// Initial condition of run `run_id`: Bernoulli draws are keyed by the run.
inline InitialCondition initial_for_run(const InitialCondition& init, std::uint64_t run_id) {
  if (const auto* b = std::get_if<BernoulliRight>(&init)) {
    BernoulliRight r = *b;
    r.stream = collection_id(run_id, 0) ^ (b->stream << 32);
    return r;
  }
  return init;
}

inline FrontRunRecord run_front_once(const FrontRunSpec& spec, std::uint64_t run_id, Interval window,
                                     std::int64_t margin, const ChangeSink* sink) {
  spec.params.validate();
  FrontRunRecord rec;
  rec.run_id = run_id;
  rec.window = window;
  const ClockCollection clocks(spec.seed, collection_id(run_id, 0), spec.params.p());
  Engine engine({Layer{ModelKind::kFA1f, make_initial(initial_for_run(spec.init, run_id), window, margin)}}, clocks,
                0.0, spec.engine);
  const SpinConfig& s = engine.config();

  std::int64_t x = *engine.leftmost_zero();
  rec.path.record(0.0, x);
  rec.front_at_integer.push_back(x);
  const auto last_integer = static_cast<std::int64_t>(std::floor(spec.horizon));
  bool empty_right = s[x + 1] == 0;
  double since = 0.0;

  // Called with the spin at `changed` already updated (old value `old`):
  // integer times before t see the pre-change configuration.
  auto flush_integers = [&](double t, std::int64_t changed, int old) {
    while (static_cast<std::int64_t>(rec.front_at_integer.size()) <= last_integer &&
           static_cast<double>(rec.front_at_integer.size()) < t) {
      rec.front_at_integer.push_back(x);
      if (spec.pattern_series) {
        Pattern pat = read_pattern(s, x, spec.pattern_width);
        const std::int64_t k = changed - x;
        if (k >= 0 && k <= spec.pattern_width) {
          const std::uint64_t bit = std::uint64_t{1} << k;
          pat.bits = old ? (pat.bits | bit) : (pat.bits & ~bit);
        }
        rec.pattern_at_integer.push_back(pat.bits);
      }
    }
  };
  auto accumulate = [&](double t) {
    const double a = std::max(since, spec.occupancy_from);
    if (empty_right && t > a) rec.empty_right_time += t - a;
    since = t;
  };

  auto on_change = [&](const Change& c) {
    flush_integers(c.time, c.site, c.old_value);
    accumulate(c.time);
    const std::int64_t nx = *engine.leftmost_zero();
    if (nx != x) {
      const std::int64_t d = nx - x;
      if (d == -1) {
        ++rec.jumps.minus;
      } else if (d == 1) {
        ++rec.jumps.plus;
        if (c.time >= spec.occupancy_from) ++rec.plus_after;
        // only site x changed, so sigma(x + 1) is the same before and after
        if (s[x + 1] == 0) ++rec.jumps.plus_with_empty_right;
      } else {
        ++rec.jumps.other;
      }
      x = nx;
      rec.path.record(c.time, x);
    }
    empty_right = s[x + 1] == 0;
    if (sink) (*sink)(c, x);
    return false;
  };

  std::vector<double> times = spec.probe_times;
  std::sort(times.begin(), times.end());
  for (double t : times) {
    if (t < 0.0 || t > spec.horizon) continue;
    engine.run_until(t, on_change);
    if (spec.pattern_width >= 0) rec.patterns.push_back(read_pattern(s, x, spec.pattern_width));
    std::vector<bool> g;
    for (const auto& gp : spec.gaps) g.push_back(gap_event(s, x + gp.a, x + gp.b, gp.l));
    rec.gap_ok.push_back(std::move(g));
  }
  engine.run_until(spec.horizon, on_change);
  flush_integers(std::numeric_limits<double>::infinity(), window.lo - 1, s[window.lo - 1]);
  accumulate(spec.horizon);
  rec.final_front = x;
  rec.rings = engine.rings_processed();
  return rec;
}

/// One FA-1f front trajectory on an automatically sized (and, if needed,
/// widened) window.
inline FrontRunRecord run_front(const FrontRunSpec& spec, std::uint64_t run_id, const ChangeSink* sink = nullptr) {
  const double reach = spec.horizon;
  std::int64_t support = initial_support_hi(spec.init);
  std::int64_t max_offset = spec.pattern_width;
  for (const auto& g : spec.gaps) max_offset = std::max(max_offset, g.b);
  return with_widening(support + max_offset, reach, spec.window, [&](Interval window, const WindowPolicy& pol) {
    return run_front_once(spec, run_id, window, pol.margin, sink);
  });
}

}  // namespace kcm
