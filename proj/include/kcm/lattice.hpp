#pragma once

// Windowed spin configurations on Z, the front, and front-anchored
// observables.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "kcm/randomness.hpp"

namespace kcm {

/// Closed integer interval [lo, hi].
struct Interval {
  std::int64_t lo = 0;
  std::int64_t hi = 0;

  constexpr std::int64_t size() const noexcept { return hi - lo + 1; }
  constexpr bool contains(std::int64_t x) const noexcept { return lo <= x && x <= hi; }
  friend constexpr bool operator==(const Interval&, const Interval&) = default;
};

class NoFrontError : public std::runtime_error {
 public:
  NoFrontError() : std::runtime_error("configuration has no zero: front undefined") {}
};

class WindowTooSmallError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Spins on a finite window; every site outside reads `exterior`.
///
/// `margin` sites at each end of the window form sentinel regions. The event
/// engine refuses to modify them when simulating on Z, which is how window
/// adequacy is detected.
class SpinConfig {
 public:
  SpinConfig() = default;
  SpinConfig(Interval window, int exterior = 1, std::int64_t margin = 0)
      : window_(window), exterior_(exterior), margin_(margin) {
    if (window.lo > window.hi) throw std::invalid_argument("window_lo > window_hi");
    if (exterior != 0 && exterior != 1) throw std::invalid_argument("exterior spin must be 0 or 1");
    if (margin < 0) throw std::invalid_argument("negative sentinel margin");
    spins_.assign(static_cast<std::size_t>(window.size()), static_cast<std::uint8_t>(exterior));
  }

  const Interval& window() const noexcept { return window_; }
  std::int64_t lo() const noexcept { return window_.lo; }
  std::int64_t hi() const noexcept { return window_.hi; }
  int exterior() const noexcept { return exterior_; }
  std::int64_t margin() const noexcept { return margin_; }
  bool contains(std::int64_t x) const noexcept { return window_.contains(x); }

  bool in_sentinel(std::int64_t x) const noexcept {
    return x < window_.lo + margin_ || x > window_.hi - margin_;
  }

  int operator[](std::int64_t x) const noexcept {
    return contains(x) ? spins_[index(x)] : exterior_;
  }

  void set(std::int64_t x, int value) {
    if (!contains(x)) throw std::out_of_range("site outside window");
    spins_[index(x)] = static_cast<std::uint8_t>(value != 0);
  }

  std::span<const std::uint8_t> spins() const noexcept { return spins_; }

  /// Leftmost zero inside the window, if any.
  std::optional<std::int64_t> leftmost_zero() const noexcept {
    auto it = std::find(spins_.begin(), spins_.end(), std::uint8_t{0});
    if (it == spins_.end()) return std::nullopt;
    return window_.lo + (it - spins_.begin());
  }

  /// Leftmost zero at or after `from`, searching inside the window.
  std::optional<std::int64_t> next_zero(std::int64_t from) const noexcept {
    for (std::int64_t x = std::max(from, window_.lo); x <= window_.hi; ++x) {
      if (spins_[index(x)] == 0) return x;
    }
    return std::nullopt;
  }

  std::int64_t count_zeros() const noexcept {
    return std::count(spins_.begin(), spins_.end(), std::uint8_t{0});
  }

  /// theta_y: result(x) = (*this)(x + y).
  SpinConfig shifted(std::int64_t y) const {
    SpinConfig s = *this;
    s.window_ = {window_.lo - y, window_.hi - y};
    return s;
  }

  /// Pointwise order on the union of the two windows (exteriors included).
  bool leq(const SpinConfig& other) const noexcept {
    const std::int64_t a = std::min(lo(), other.lo());
    const std::int64_t b = std::max(hi(), other.hi());
    if (exterior_ > other.exterior_) return false;
    for (std::int64_t x = a; x <= b; ++x) {
      if ((*this)[x] > other[x]) return false;
    }
    return true;
  }

  friend bool operator==(const SpinConfig& a, const SpinConfig& b) {
    return a.window_ == b.window_ && a.exterior_ == b.exterior_ && a.spins_ == b.spins_;
  }

 private:
  std::size_t index(std::int64_t x) const noexcept {
    return static_cast<std::size_t>(x - window_.lo);
  }

  Interval window_{0, 0};
  int exterior_ = 1;
  std::int64_t margin_ = 0;
  std::vector<std::uint8_t> spins_ = std::vector<std::uint8_t>(1, 1);
};

// ---------------------------------------------------------------------------
// Initial conditions

struct Delta0 {};

/// Site 0 empty, sites < 0 occupied, sites in (0, extent] occupied with
/// probability `p` (independently), everything further right occupied.
struct BernoulliRight {
  double p = 0.1;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::int64_t extent = 200;
};

/// `bits[k]` is the spin at site k - origin; sites outside the string are 1.
struct ExplicitPattern {
  std::string bits;
  std::int64_t origin = 0;
};

using InitialCondition = std::variant<Delta0, BernoulliRight, ExplicitPattern>;

/// Rightmost site that may hold a zero under `init`.
inline std::int64_t initial_support_hi(const InitialCondition& init) {
  if (const auto* b = std::get_if<BernoulliRight>(&init)) return std::max<std::int64_t>(b->extent, 0);
  if (const auto* e = std::get_if<ExplicitPattern>(&init)) {
    return static_cast<std::int64_t>(e->bits.size()) - 1 - e->origin;
  }
  return 0;
}

inline SpinConfig make_initial(const InitialCondition& init, Interval window, std::int64_t margin = 0) {
  if (!window.contains(0)) throw std::invalid_argument("window must contain the origin");
  SpinConfig config(window, 1, margin);

  if (std::holds_alternative<Delta0>(init)) {
    config.set(0, 0);
  } else if (const auto* b = std::get_if<BernoulliRight>(&init)) {
    if (!(b->p >= 0.0 && b->p <= 1.0)) throw std::invalid_argument("Bernoulli p outside [0,1]");
    const ClockCollection coins(b->seed, b->stream, 1.0);
    config.set(0, 0);
    const std::int64_t last = std::min(b->extent, window.hi);
    for (std::int64_t x = 1; x <= last; ++x) {
      config.set(x, coins.uniform_closed0(x, 1, Channel::kInit) < b->p ? 1 : 0);
    }
  } else {
    const auto& e = std::get<ExplicitPattern>(init);
    if (e.origin < 0 || e.origin >= static_cast<std::int64_t>(e.bits.size())) {
      throw std::invalid_argument("pattern origin outside pattern");
    }
    for (std::size_t k = 0; k < e.bits.size(); ++k) {
      const char ch = e.bits[k];
      if (ch != '0' && ch != '1') throw std::invalid_argument("pattern must consist of 0/1 characters");
      const std::int64_t x = static_cast<std::int64_t>(k) - e.origin;
      if (ch == '0' && x < 0) throw std::invalid_argument("pattern has a zero left of the origin");
      if (!window.contains(x)) {
        if (ch == '0') throw std::invalid_argument("pattern zero outside window");
        continue;
      }
      config.set(x, ch - '0');
    }
    if (config[0] != 0) throw std::invalid_argument("pattern must have a zero at the origin");
  }
  return config;
}

/// Leftmost zero. Requires an occupied exterior.
inline std::int64_t front(const SpinConfig& config) {
  if (config.exterior() == 0) throw NoFrontError();
  auto z = config.leftmost_zero();
  if (!z) throw NoFrontError();
  return *z;
}

/// Membership in H(a, b, l): no run of l consecutive occupied sites inside
/// [a, b]. Vacuously true when l > b - a + 1.
inline bool gap_event(const SpinConfig& config, std::int64_t a, std::int64_t b, std::int64_t l) {
  if (a > b) throw std::invalid_argument("gap_event requires a <= b");
  if (l < 1) throw std::invalid_argument("gap length must be positive");
  if (l > b - a + 1) return true;
  std::int64_t run = 0;
  for (std::int64_t z = a; z <= b; ++z) {
    run = config[z] ? run + 1 : 0;
    if (run >= l) return false;
  }
  return true;
}

/// Spins on [X, X + width] read from the front X; bit k is sigma(X + k).
struct Pattern {
  std::uint64_t bits = 0;
  int width = 0;

  int operator[](int k) const noexcept { return static_cast<int>((bits >> k) & 1u); }

  std::string to_string() const {
    std::string s(static_cast<std::size_t>(width) + 1, '0');
    for (int k = 0; k <= width; ++k) s[static_cast<std::size_t>(k)] = (*this)[k] ? '1' : '0';
    return s;
  }
  friend bool operator==(const Pattern&, const Pattern&) = default;
};

inline Pattern read_pattern(const SpinConfig& config, std::int64_t anchor, int width) {
  if (width < 0 || width > 62) throw std::invalid_argument("pattern width must be in [0, 62]");
  if (!config.contains(anchor) || !config.contains(anchor + width)) {
    throw WindowTooSmallError("window does not cover the requested pattern");
  }
  Pattern pat{0, width};
  for (int k = 0; k <= width; ++k) {
    if (config[anchor + k]) pat.bits |= std::uint64_t{1} << k;
  }
  return pat;
}

inline Pattern seen_from_front(const SpinConfig& config, int width) {
  return read_pattern(config, front(config), width);
}

/// xi^x: distance from x to the nearest empty site of `box`, where the two
/// sites just outside the box count as empty.
inline std::int64_t distance_to_zero(const SpinConfig& config, std::int64_t x, Interval box) {
  if (!box.contains(x)) throw std::invalid_argument("site outside the box");
  std::int64_t best = std::min(x - (box.lo - 1), (box.hi + 1) - x);
  for (std::int64_t d = 0; d < best; ++d) {
    if ((box.contains(x - d) && config[x - d] == 0) || (box.contains(x + d) && config[x + d] == 0)) {
      return d;
    }
  }
  return best;
}

/// Front positions X(t) as a cadlag step function.
class FrontPath {
 public:
  FrontPath() = default;
  FrontPath(double t0, std::int64_t x0) { record(t0, x0); }

  void record(double t, std::int64_t x) {
    if (!times_.empty() && t < times_.back()) throw std::invalid_argument("front path times must increase");
    times_.push_back(t);
    positions_.push_back(x);
  }

  const std::vector<double>& times() const noexcept { return times_; }
  const std::vector<std::int64_t>& positions() const noexcept { return positions_; }
  bool empty() const noexcept { return times_.empty(); }
  double start_time() const { return times_.front(); }

  /// Position after the last recorded change at or before t.
  std::int64_t at(double t) const {
    if (times_.empty() || t < times_.front()) throw std::out_of_range("time before path start");
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    return positions_[static_cast<std::size_t>(it - times_.begin()) - 1];
  }

  /// xi_n = X(n) - X(n-1) for n = 1..count, at integer times from the start.
  std::vector<std::int64_t> increments(std::int64_t count) const {
    std::vector<std::int64_t> out;
    out.reserve(static_cast<std::size_t>(std::max<std::int64_t>(count, 0)));
    std::size_t i = 0;
    std::int64_t prev = positions_.at(0);
    const double t0 = times_.front();
    for (std::int64_t n = 1; n <= count; ++n) {
      const double t = t0 + static_cast<double>(n);
      while (i + 1 < times_.size() && times_[i + 1] <= t) ++i;
      out.push_back(positions_[i] - prev);
      prev = positions_[i];
    }
    return out;
  }

 private:
  std::vector<double> times_;
  std::vector<std::int64_t> positions_;
};

}  // namespace kcm
