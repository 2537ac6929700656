#pragma once

// Keyed, stateless randomness for the graphical construction.
//
// Every clock increment E_{x,n} ~ Exp(1) and every coin B_{x,n} ~ Ber(p) is a
// pure function of (seed, collection_id, x + shift, n, channel). There is no
// stream state to carry around, so a trajectory can be replayed from any
// point, space shifts are exact, and results do not depend on which worker
// evaluated which site.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace kcm {

/// Philox4x32-10 block function (Salmon et al., SC'11).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter apply(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;
};

/// SplitMix64 finalizer; used only to fold (seed, collection_id) into a key.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Which half of the Philox block a variate is read from. The exponential
/// increment and the coin of one ring share a block (one evaluation per ring);
/// initial-condition draws use a separately tagged counter.
enum class Channel : std::uint32_t { kExp = 0, kCoin = 1, kInit = 2 };

/// Increment and coin uniform of one ring, from a single block evaluation.
struct RingDraw {
  double increment;     ///< E_{x,n}
  double coin_uniform;  ///< U in [0,1); B_{x,n} = [U < p]
};

/// The collection C = (B_{x,n}, E_{x,n}) of one independent copy, possibly
/// viewed through a space shift. Cheap to copy.
class ClockCollection {
 public:
  ClockCollection() = default;
  ClockCollection(std::uint64_t seed, std::uint64_t collection_id, double p)
      : seed_(seed), collection_id_(collection_id), p_(p) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw std::invalid_argument("coin probability must lie in [0,1]");
    }
    const std::uint64_t k =
        splitmix64(seed ^ splitmix64(collection_id + 0x632BE59BD9B4E019ull));
    key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t collection_id() const noexcept { return collection_id_; }
  std::int64_t shift_offset() const noexcept { return shift_; }
  double p() const noexcept { return p_; }

  /// theta_y: accessor(shifted(y), x, n) == accessor(*this, x + y, n).
  ClockCollection shifted(std::int64_t y) const noexcept {
    ClockCollection c = *this;
    c.shift_ += y;
    return c;
  }

  /// Uniform in (0, 1] with 53 bits of resolution.
  double uniform_open0(std::int64_t site, std::uint64_t n, Channel ch) const noexcept {
    return to_open0(bits(site, n, ch));
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform_closed0(std::int64_t site, std::uint64_t n, Channel ch) const noexcept {
    return to_closed0(bits(site, n, ch));
  }

  /// E_{site,n} ~ Exp(1), n >= 1.
  double increment(std::int64_t site, std::uint64_t n) const noexcept {
    return -std::log(uniform_open0(site, n, Channel::kExp));
  }

  /// B_{site,n} ~ Ber(p), n >= 1. p == 0 and p == 1 give constant coins.
  int coin(std::int64_t site, std::uint64_t n) const noexcept {
    return coin_from_uniform(uniform_closed0(site, n, Channel::kCoin));
  }

  int coin_from_uniform(double u) const noexcept {
    if (p_ <= 0.0) return 0;
    if (p_ >= 1.0) return 1;
    return u < p_ ? 1 : 0;
  }

  RingDraw draw(std::int64_t site, std::uint64_t n) const noexcept {
    const auto out = block(site, n, 0);
    return {-std::log(to_open0(join(out[0], out[1]))), to_closed0(join(out[2], out[3]))};
  }

  /// Time of the n-th ring at site: E_{site,1} + ... + E_{site,n}, summed left
  /// to right so that the event engine's running sums agree bit-for-bit.
  double ring_time(std::int64_t site, std::uint64_t n) const {
    if (n == 0) throw std::invalid_argument("ring index starts at 1");
    double t = 0.0;
    for (std::uint64_t k = 1; k <= n; ++k) t += increment(site, k);
    return t;
  }

 private:
  static constexpr std::uint64_t join(std::uint32_t hi, std::uint32_t lo) noexcept {
    return (std::uint64_t{hi} << 32) | lo;
  }
  static double to_open0(std::uint64_t b) noexcept { return static_cast<double>((b >> 11) + 1) * 0x1.0p-53; }
  static double to_closed0(std::uint64_t b) noexcept { return static_cast<double>(b >> 11) * 0x1.0p-53; }

  Philox4x32::Counter block(std::int64_t site, std::uint64_t n, std::uint32_t tag) const noexcept {
    const auto s = static_cast<std::uint64_t>(site + shift_);
    const Philox4x32::Counter ctr = {static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                                     static_cast<std::uint32_t>(n),
                                     static_cast<std::uint32_t>(n >> 32) ^ tag};
    return Philox4x32::apply(ctr, key_);
  }

  std::uint64_t bits(std::int64_t site, std::uint64_t n, Channel ch) const noexcept {
    if (ch == Channel::kInit) {
      const auto out = block(site, n, 0x49000000u);
      return join(out[0], out[1]);
    }
    const auto out = block(site, n, 0);
    return ch == Channel::kExp ? join(out[0], out[1]) : join(out[2], out[3]);
  }

  std::uint64_t seed_ = 0;
  std::uint64_t collection_id_ = 0;
  std::int64_t shift_ = 0;
  double p_ = 0.0;
  Philox4x32::Key key_ = {0, 0};
};

}  // namespace kcm
