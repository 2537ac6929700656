#pragma once

// FA-1f dominated by a threshold contact process that is restarted from the
// FA-1f front every time it dies out.
//
// Copy i of the contact process runs on its own independent collection C^(i).
// The first copy starts from delta^0 together with sigma; when copy i dies at
// T_i, copy i+1 starts from delta^{X_i}, X_i the FA-1f front at T_i, and from
// then on both processes read C^(i+1) seen from X_i (site x uses the clock of
// x - X_i), with ring times counted from T_i. The procedure stops at the first
// copy that survives `horizon` time units.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kcm/dynamics.hpp"
#include "kcm/lattice.hpp"
#include "kcm/randomness.hpp"

namespace kcm {

/// Collection id of copy `copy` (1-based) of run `run`.
constexpr std::uint64_t collection_id(std::uint64_t run, std::uint64_t copy) noexcept {
  return run * 4096u + copy;
}

struct RestartEntry {
  double U;        ///< lifetime of the copy that died
  std::int64_t Z;  ///< position of its last zero
  std::int64_t X;  ///< FA-1f front when it died (next anchor)
};

struct RestartOutcome {
  double T = 0.0;
  std::int64_t Y = 0;
  int L = 1;
  bool survived = false;
  double horizon = 0.0;
  FrontPath fa_path;
  SpinConfig fa_final;
  SpinConfig tcp_final;
  std::vector<RestartEntry> restart_log;
  std::uint64_t order_violations = 0;
  std::uint64_t rings = 0;
};

struct RestartOptions {
  double horizon = 500.0;
  int max_restarts = 200;
  EngineOptions engine{};
};

/// Runs the restart procedure from sigma0 (whose window is used for both
/// processes). Throws WindowTooSmallError if the window proves inadequate.
inline RestartOutcome restart_couple(const SpinConfig& sigma0, const ModelParams& params, std::uint64_t seed,
                                     std::uint64_t run_id, const RestartOptions& opts) {
  params.validate();
  if (opts.max_restarts < 1) throw std::invalid_argument("max_restarts must be positive");
  if (!sigma0.contains(0) || sigma0[0] != 0) throw std::invalid_argument("sigma0 must have its front at 0");
  for (std::int64_t x = sigma0.lo(); x < 0; ++x) {
    if (sigma0[x] != 1) throw std::invalid_argument("sigma0 must be occupied left of the origin");
  }

  auto delta_at = [&](std::int64_t y) {
    SpinConfig d(sigma0.window(), 1, sigma0.margin());
    d.set(y, 0);
    return d;
  };

  RestartOutcome out;
  out.horizon = opts.horizon;
  Engine engine({Layer{ModelKind::kFA1f, sigma0}, Layer{ModelKind::kTCP, delta_at(0)}},
                ClockCollection(seed, collection_id(run_id, 1), params.p()), 0.0, opts.engine);
  out.fa_path.record(0.0, 0);

  double segment_start = 0.0;
  std::int64_t anchor = 0;
  std::optional<std::int64_t> last_zero;
  int copy = 1;
  while (true) {
    last_zero.reset();
    const bool died = engine.run_until(segment_start + opts.horizon, [&](const Change& c) {
      if (engine.config(0)[c.site] > engine.config(1)[c.site]) ++out.order_violations;
      if (c.layer == 0) {
        const auto f = engine.leftmost_zero(0);
        if (f && *f != out.fa_path.positions().back()) out.fa_path.record(c.time, *f);
      }
      if (c.layer == 1 && engine.zero_count(1) == 0) {
        last_zero = c.site;
        return true;
      }
      return false;
    });

    if (!died) {
      out.survived = true;
      out.L = copy;
      out.T = segment_start;
      out.Y = anchor;
      break;
    }
    const double t_death = engine.now();
    const auto fa_front = engine.leftmost_zero(0);
    if (!fa_front) throw NoFrontError();
    out.restart_log.push_back({t_death - segment_start, *last_zero, *fa_front});
    if (copy >= opts.max_restarts) {
      out.survived = false;
      out.L = copy;
      out.T = t_death;
      out.Y = *fa_front;
      break;
    }
    segment_start = t_death;
    anchor = *fa_front;
    ++copy;
    engine.reset_layer(1, delta_at(anchor));
    engine.restart_clocks(ClockCollection(seed, collection_id(run_id, static_cast<std::uint64_t>(copy)), params.p())
                              .shifted(-anchor),
                          segment_start);
  }
  out.fa_final = engine.config(0);
  out.tcp_final = engine.config(1);
  out.rings = engine.rings_processed();
  return out;
}

/// Restart procedure from an initial condition on an automatically sized
/// window, widened and replayed on sentinel violations.
inline RestartOutcome restart_couple(const InitialCondition& init, const ModelParams& params, std::uint64_t seed,
                                     std::uint64_t run_id, const RestartOptions& opts,
                                     const WindowPolicy& policy = {}) {
  return with_widening(initial_support_hi(init), 2.0 * opts.horizon, policy,
                       [&](Interval window, const WindowPolicy& pol) {
                         return restart_couple(make_initial(init, window, pol.margin), params, seed, run_id, opts);
                       });
}

/// X_i <= Z_i + 1 for every logged restart.
inline bool check_anchor_property(const RestartOutcome& outcome) {
  for (const auto& e : outcome.restart_log) {
    if (e.X > e.Z + 1) return false;
  }
  return true;
}

}  // namespace kcm
