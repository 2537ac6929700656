#pragma once

// Exact finite-state computations: generators on a box, detailed balance,
// transient laws by uniformization, and maximal couplings.
//
// States on a box of n sites are indexed little-endian from the left edge:
// bit k of the index is the spin at site box.lo + k.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "kcm/dynamics.hpp"
#include "kcm/lattice.hpp"

namespace kcm::oracle {

enum class Boundary { kZero, kFrozenOnes };

constexpr int kMaxSites = 20;

/// Sparse generator: every transition flips exactly one site, so row s is
/// stored as the n rates r(s -> s^k).
class GeneratorMatrix {
 public:
  GeneratorMatrix(int sites, ModelParams params, Boundary boundary)
      : sites_(sites), params_(params), boundary_(boundary) {
    if (sites < 1 || sites > kMaxSites) throw std::invalid_argument("box size must be in [1, 20]");
    params.validate();
    const std::size_t states = dimension();
    rates_.assign(states * static_cast<std::size_t>(sites), 0.0);
    const int ext = boundary == Boundary::kZero ? 0 : 1;
    for (std::size_t s = 0; s < states; ++s) {
      for (int k = 0; k < sites; ++k) {
        const int left = k == 0 ? ext : spin(s, k - 1);
        const int right = k == sites - 1 ? ext : spin(s, k + 1);
        const int here = spin(s, k);
        const double c = 1.0 - static_cast<double>(left * right);
        double r;
        if (params.kind == ModelKind::kFA1f) {
          r = c * (params.q * here + params.p() * (1 - here));
        } else {
          r = c * params.q * here + params.p() * (1 - here);
        }
        rates_[s * static_cast<std::size_t>(sites) + static_cast<std::size_t>(k)] = r;
      }
    }
  }

  int sites() const noexcept { return sites_; }
  std::size_t dimension() const noexcept { return std::size_t{1} << sites_; }
  const ModelParams& params() const noexcept { return params_; }
  Boundary boundary() const noexcept { return boundary_; }

  static int spin(std::size_t state, int k) noexcept { return static_cast<int>((state >> k) & 1u); }

  /// Rate of flipping site k from `state`.
  double flip_rate(std::size_t state, int k) const {
    return rates_[state * static_cast<std::size_t>(sites_) + static_cast<std::size_t>(k)];
  }

  double exit_rate(std::size_t state) const {
    double sum = 0.0;
    for (int k = 0; k < sites_; ++k) sum += flip_rate(state, k);
    return sum;
  }

  /// Entry L(from, to) of the generator.
  double entry(std::size_t from, std::size_t to) const {
    if (from == to) return -exit_rate(from);
    const std::size_t diff = from ^ to;
    if ((diff & (diff - 1)) != 0) return 0.0;
    return flip_rate(from, std::countr_zero(diff));
  }

  double max_exit_rate() const {
    double m = 0.0;
    for (std::size_t s = 0; s < dimension(); ++s) m = std::max(m, exit_rate(s));
    return m;
  }

  /// row * L
  std::vector<double> apply_left(const std::vector<double>& row) const {
    std::vector<double> out(dimension(), 0.0);
    for (std::size_t s = 0; s < dimension(); ++s) {
      if (row[s] == 0.0) continue;
      double exit = 0.0;
      for (int k = 0; k < sites_; ++k) {
        const double r = flip_rate(s, k);
        out[s ^ (std::size_t{1} << k)] += row[s] * r;
        exit += r;
      }
      out[s] -= row[s] * exit;
    }
    return out;
  }

 private:
  int sites_;
  ModelParams params_;
  Boundary boundary_;
  std::vector<double> rates_;
};

inline GeneratorMatrix generator_matrix(const ModelParams& params, Interval box, Boundary boundary) {
  if (box.size() > kMaxSites) throw std::invalid_argument("box too large for exact enumeration");
  return GeneratorMatrix(static_cast<int>(box.size()), params, boundary);
}

/// Probability vector over {0, ..., size-1}.
class FiniteDistribution {
 public:
  FiniteDistribution() = default;
  explicit FiniteDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    for (double p : probs_) {
      if (!(p >= -1e-15)) throw std::invalid_argument("negative probability");
    }
    const double total = std::accumulate(probs_.begin(), probs_.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("probabilities do not sum to one");
  }

  static FiniteDistribution point_mass(std::size_t size, std::size_t at) {
    std::vector<double> v(size, 0.0);
    v.at(at) = 1.0;
    return FiniteDistribution(std::move(v));
  }

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  const std::vector<double>& probs() const noexcept { return probs_; }

 private:
  std::vector<double> probs_;
};

inline double tv_distance(const FiniteDistribution& a, const FiniteDistribution& b) {
  if (a.size() != b.size()) throw std::invalid_argument("outcome sets differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return 0.5 * sum;
}

/// Ber(p) product measure on the box: mu(s) = p^{#ones} q^{#zeros}.
inline FiniteDistribution product_measure(int sites, double p) {
  std::vector<double> v(std::size_t{1} << sites);
  for (std::size_t s = 0; s < v.size(); ++s) {
    const int ones = std::popcount(s);
    v[s] = std::pow(p, ones) * std::pow(1.0 - p, sites - ones);
  }
  return FiniteDistribution(std::move(v));
}

/// max |mu(s) r(s -> s^k) - mu(s^k) r(s^k -> s)| over states and sites.
inline double detailed_balance_violation(const GeneratorMatrix& g, double p) {
  const auto mu = product_measure(g.sites(), p);
  double worst = 0.0;
  for (std::size_t s = 0; s < g.dimension(); ++s) {
    for (int k = 0; k < g.sites(); ++k) {
      const std::size_t t = s ^ (std::size_t{1} << k);
      worst = std::max(worst, std::abs(mu[s] * g.flip_rate(s, k) - mu[t] * g.flip_rate(t, k)));
    }
  }
  return worst;
}

/// max_s |(mu L)(s)|: how far mu is from stationarity.
inline double stationarity_violation(const GeneratorMatrix& g, const FiniteDistribution& mu) {
  const auto r = g.apply_left(mu.probs());
  double worst = 0.0;
  for (double x : r) worst = std::max(worst, std::abs(x));
  return worst;
}

/// Row `initial` of exp(tL) by uniformization at rate `rate` (0 selects the
/// maximal exit rate). Long horizons are split into slices with rate*dt <= 32
/// so that the Poisson weights stay representable; each slice truncates its
/// Poisson series once the remaining mass is below 1e-13.
inline FiniteDistribution transient_distribution(const GeneratorMatrix& g, std::size_t initial, double t,
                                                 double rate = 0.0) {
  if (t < 0.0) throw std::invalid_argument("negative time");
  if (initial >= g.dimension()) throw std::invalid_argument("initial state out of range");
  std::vector<double> dist(g.dimension(), 0.0);
  dist[initial] = 1.0;
  const double lambda = rate > 0.0 ? rate : std::max(g.max_exit_rate(), 1e-300);
  if (t == 0.0 || g.max_exit_rate() == 0.0) return FiniteDistribution(std::move(dist));
  if (lambda < g.max_exit_rate()) throw std::invalid_argument("uniformization rate below maximal exit rate");

  const int slices = std::max(1, static_cast<int>(std::ceil(lambda * t / 32.0)));
  const double lt = lambda * t / slices;
  for (int sl = 0; sl < slices; ++sl) {
    std::vector<double> acc(g.dimension(), 0.0);
    std::vector<double> term = dist;
    double weight = std::exp(-lt);
    double mass = weight;
    for (std::size_t s = 0; s < acc.size(); ++s) acc[s] += weight * term[s];
    for (int k = 1; 1.0 - mass > 1e-13 && k < 100000; ++k) {
      // term <- term * (I + L / lambda)
      auto lt_term = g.apply_left(term);
      for (std::size_t s = 0; s < term.size(); ++s) term[s] += lt_term[s] / lambda;
      weight *= lt / k;
      mass += weight;
      for (std::size_t s = 0; s < acc.size(); ++s) acc[s] += weight * term[s];
    }
    const double total = std::accumulate(acc.begin(), acc.end(), 0.0);
    for (double& x : acc) x /= total;
    dist = std::move(acc);
  }
  for (double& x : dist) x = std::max(x, 0.0);
  const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
  for (double& x : dist) x /= total;
  return FiniteDistribution(std::move(dist));
}

/// Index of the configuration restricted to `box` (little-endian from box.lo).
inline std::size_t state_index(const SpinConfig& s, Interval box) {
  std::size_t idx = 0;
  for (std::int64_t x = box.lo; x <= box.hi; ++x) {
    if (s[x]) idx |= std::size_t{1} << (x - box.lo);
  }
  return idx;
}

inline SpinConfig config_from_index(std::size_t idx, Interval box, int exterior) {
  SpinConfig s(box, exterior, 0);
  for (std::int64_t x = box.lo; x <= box.hi; ++x) s.set(x, static_cast<int>((idx >> (x - box.lo)) & 1u));
  return s;
}

struct JointEntry {
  std::size_t x;
  std::size_t y;
  double mass;
};

struct JointDistribution {
  std::size_t size = 0;
  std::vector<JointEntry> entries;

  double disagreement() const {
    double d = 0.0;
    for (const auto& e : entries) {
      if (e.x != e.y) d += e.mass;
    }
    return d;
  }

  FiniteDistribution marginal_x() const { return marginal(true); }
  FiniteDistribution marginal_y() const { return marginal(false); }

 private:
  FiniteDistribution marginal(bool first) const {
    std::vector<double> v(size, 0.0);
    for (const auto& e : entries) v[first ? e.x : e.y] += e.mass;
    return FiniteDistribution(std::move(v));
  }
};

/// Maximal coupling: min(d1, d2) on the diagonal, then the residual masses
/// (which have disjoint supports) paired greedily in index order.
inline JointDistribution maximal_coupling(const FiniteDistribution& d1, const FiniteDistribution& d2) {
  if (d1.size() != d2.size()) throw std::invalid_argument("maximal coupling: outcome sets differ");
  JointDistribution j;
  j.size = d1.size();
  std::vector<double> r1(d1.size()), r2(d2.size());
  for (std::size_t i = 0; i < d1.size(); ++i) {
    const double m = std::min(d1[i], d2[i]);
    if (m > 0.0) j.entries.push_back({i, i, m});
    r1[i] = d1[i] - m;
    r2[i] = d2[i] - m;
  }
  std::size_t a = 0, b = 0;
  while (true) {
    while (a < r1.size() && r1[a] <= 0.0) ++a;
    while (b < r2.size() && r2[b] <= 0.0) ++b;
    if (a == r1.size() || b == r2.size()) break;
    const double m = std::min(r1[a], r2[b]);
    j.entries.push_back({a, b, m});
    r1[a] -= m;
    r2[b] -= m;
    if (r1[a] < 1e-300) r1[a] = 0.0;
    if (r2[b] < 1e-300) r2[b] = 0.0;
  }
  return j;
}

}  // namespace kcm::oracle
