#pragma once

// Ensemble statistics for front trajectories: velocity, diffusivity, CLT,
// increment covariances, seen-from-front pattern measures and tail fits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "kcm/lattice.hpp"

namespace kcm {

struct Estimate {
  double value = 0.0;
  double stderr_ = 0.0;
};

class InsufficientDataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace stats {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw InsufficientDataError("mean of empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Unbiased sample variance.
inline double variance(std::span<const double> xs) {
  if (xs.size() < 2) throw InsufficientDataError("variance needs at least two samples");
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return ss / static_cast<double>(xs.size() - 1);
}

inline Estimate mean_estimate(std::span<const double> xs) {
  if (xs.size() < 2) throw InsufficientDataError("standard error needs at least two samples");
  return {mean(xs), std::sqrt(variance(xs) / static_cast<double>(xs.size()))};
}

/// Sample variance together with its large-sample standard error
/// sqrt((m4 - s^4) / n).
inline Estimate variance_estimate(std::span<const double> xs) {
  const double v = variance(xs);
  const double m = mean(xs);
  double m4 = 0.0;
  for (double x : xs) m4 += std::pow(x - m, 4);
  m4 /= static_cast<double>(xs.size());
  return {v, std::sqrt(std::max(m4 - v * v, 0.0) / static_cast<double>(xs.size()))};
}

/// Sample covariance and the standard error of the mean of centred products.
inline Estimate covariance_estimate(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("covariance of unequal samples");
  if (xs.size() < 3) throw InsufficientDataError("covariance needs at least three samples");
  const double mx = mean(xs);
  const double my = mean(ys);
  const auto n = static_cast<double>(xs.size());
  std::vector<double> prod(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) prod[i] = (xs[i] - mx) * (ys[i] - my);
  const double c = std::accumulate(prod.begin(), prod.end(), 0.0) / (n - 1.0);
  return {c, std::sqrt(variance(prod) / n)};
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Kolmogorov survival function Q(lambda) = 2 sum_k (-1)^(k-1) exp(-2 k^2 lambda^2).
inline double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// One-sample KS test against the standard normal; p-value from the
/// asymptotic Kolmogorov law with Stephens' small-sample correction.
inline KsResult ks_test_standard_normal(std::vector<double> samples) {
  if (samples.empty()) throw InsufficientDataError("KS test on empty sample");
  std::sort(samples.begin(), samples.end());
  const auto n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = normal_cdf(samples[i]);
    const auto di = static_cast<double>(i);
    d = std::max({d, (di + 1.0) / n - f, f - di / n});
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)};
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

inline LinearFit least_squares(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw InsufficientDataError("linear fit needs two points");
  const double mx = mean(xs);
  const double my = mean(ys);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0) throw InsufficientDataError("degenerate abscissae");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return f;
}

}  // namespace stats

// ---------------------------------------------------------------------------
// Front velocity and fluctuations

/// Mean and standard error of X(t)/t over paths.
inline Estimate velocity_estimate(std::span<const double> positions, double t) {
  if (positions.size() < 2) throw InsufficientDataError("velocity needs at least two paths");
  if (!(t > 0.0)) throw std::invalid_argument("velocity time must be positive");
  std::vector<double> v(positions.begin(), positions.end());
  for (double& x : v) x /= t;
  return stats::mean_estimate(v);
}

inline Estimate velocity_estimate(std::span<const FrontPath> paths, double t) {
  std::vector<double> xs;
  xs.reserve(paths.size());
  for (const auto& p : paths) xs.push_back(static_cast<double>(p.at(t) - p.at(p.start_time())));
  return velocity_estimate(xs, t);
}

/// v_hat - (p * nu_hat[sigma~(1) = 0] - q) with the two standard errors
/// combined in quadrature.
inline Estimate velocity_formula_residual(const Estimate& v_hat, const Estimate& nu_empty_at_1, double q) {
  const double p = 1.0 - q;
  return {v_hat.value - (p * nu_empty_at_1.value - q),
          std::hypot(v_hat.stderr_, p * nu_empty_at_1.stderr_)};
}

/// Var(X_t - X_0) / t.
inline Estimate diffusivity_direct(std::span<const double> displacements, double t) {
  auto v = stats::variance_estimate(displacements);
  return {v.value / t, v.stderr_ / t};
}

/// KS test of (X_t - v t) / sqrt(s2 t) against N(0, 1).
inline stats::KsResult clt_check(std::span<const double> positions, double t, double v_hat, double s2_hat) {
  if (!(s2_hat > 0.0)) throw std::invalid_argument("CLT check needs a positive variance");
  std::vector<double> z;
  z.reserve(positions.size());
  for (double x : positions) z.push_back((x - v_hat * t) / std::sqrt(s2_hat * t));
  return stats::ks_test_standard_normal(std::move(z));
}

/// Increments xi_n = X(n) - X(n-1); row r holds path r, column n-1 holds xi_n.
using IncrementTable = std::vector<std::vector<double>>;

inline std::vector<double> increment_column(const IncrementTable& table, std::size_t n) {
  std::vector<double> col;
  col.reserve(table.size());
  for (const auto& row : table) {
    if (n == 0 || n > row.size()) throw InsufficientDataError("path does not reach the requested increment");
    col.push_back(row[n - 1]);
  }
  return col;
}

/// Cross-path sample covariance of xi_j and xi_{j+k}.
inline Estimate covariance_lag(const IncrementTable& table, std::size_t j, std::size_t k,
                               std::size_t min_paths = 100) {
  if (table.size() < min_paths) throw InsufficientDataError("covariance needs more paths");
  const auto a = increment_column(table, j);
  const auto b = increment_column(table, j + k);
  return stats::covariance_estimate(a, b);
}

/// Lag-k autocovariance of the increments, pooled over indices
/// first..last-k of every path (stationary regime), centred on the pooled
/// mean. The standard error treats per-path averages as i.i.d.
inline Estimate stationary_autocovariance(const IncrementTable& table, std::size_t first, std::size_t last,
                                          std::size_t k) {
  if (table.size() < 2) throw InsufficientDataError("autocovariance needs at least two paths");
  if (first < 1 || last < first + k) throw std::invalid_argument("lag window too short");
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& row : table) {
    if (row.size() < last) throw InsufficientDataError("path too short for lag window");
    for (std::size_t n = first; n <= last; ++n) total += row[n - 1];
    count += last - first + 1;
  }
  const double m = total / static_cast<double>(count);
  std::vector<double> per_path;
  per_path.reserve(table.size());
  for (const auto& row : table) {
    double acc = 0.0;
    for (std::size_t n = first; n + k <= last; ++n) acc += (row[n - 1] - m) * (row[n + k - 1] - m);
    per_path.push_back(acc / static_cast<double>(last - k - first + 1));
  }
  return stats::mean_estimate(per_path);
}

struct SeriesDiffusivity {
  Estimate s2;
  std::vector<Estimate> lags;  ///< lags[0] is the variance
  std::size_t lags_used = 0;
};

/// s^2 = Var[xi] + 2 sum_{k>=1} Cov(xi_1, xi_{1+k}) estimated in the
/// stationary regime [first, last]. The series stops once three consecutive
/// lags fall below twice their standard error (those lags are not summed).
inline SeriesDiffusivity diffusivity_series(const IncrementTable& table, std::size_t first, std::size_t last,
                                            std::size_t max_lag = 200) {
  SeriesDiffusivity out;
  out.lags.push_back(stationary_autocovariance(table, first, last, 0));
  double s2 = out.lags[0].value;
  double var = out.lags[0].stderr_ * out.lags[0].stderr_;
  std::size_t quiet = 0;
  std::vector<Estimate> pending;
  for (std::size_t k = 1; k <= max_lag && first + k <= last; ++k) {
    const Estimate c = stationary_autocovariance(table, first, last, k);
    out.lags.push_back(c);
    if (std::abs(c.value) < 2.0 * c.stderr_) {
      pending.push_back(c);
      if (++quiet == 3) break;
      continue;
    }
    for (const auto& e : pending) {
      s2 += 2.0 * e.value;
      var += 4.0 * e.stderr_ * e.stderr_;
    }
    pending.clear();
    quiet = 0;
    s2 += 2.0 * c.value;
    var += 4.0 * c.stderr_ * c.stderr_;
    out.lags_used = k;
  }
  out.s2 = {s2, std::sqrt(var)};
  return out;
}

// ---------------------------------------------------------------------------
// Seen-from-front pattern measures

class EmpiricalPatternMeasure {
 public:
  explicit EmpiricalPatternMeasure(int width = 9) : width_(width) {
    if (width < 0 || width > 62) throw std::invalid_argument("pattern width must be in [0, 62]");
  }

  void add(const Pattern& pat, std::uint64_t count = 1) {
    if (pat.width != width_) throw std::invalid_argument("pattern width mismatch");
    if (pat[0] != 0) throw std::invalid_argument("front site must be empty");
    counts_[pat.bits] += count;
    n_ += count;
  }

  void merge(const EmpiricalPatternMeasure& other) {
    if (other.width_ != width_) throw std::invalid_argument("pattern width mismatch");
    for (const auto& [bits, c] : other.counts_) counts_[bits] += c;
    n_ += other.n_;
  }

  int width() const noexcept { return width_; }
  std::uint64_t samples() const noexcept { return n_; }
  const std::map<std::uint64_t, std::uint64_t>& counts() const noexcept { return counts_; }

  double frequency(std::uint64_t bits) const {
    if (n_ == 0) return 0.0;
    auto it = counts_.find(bits);
    return it == counts_.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(n_);
  }

  /// Marginal on [0, w] for w <= width.
  EmpiricalPatternMeasure restricted(int w) const {
    if (w > width_) throw std::invalid_argument("restriction wider than measure");
    EmpiricalPatternMeasure m(w);
    const std::uint64_t mask = (std::uint64_t{1} << (w + 1)) - 1;
    for (const auto& [bits, c] : counts_) m.add(Pattern{bits & mask, w}, c);
    return m;
  }

 private:
  int width_;
  std::map<std::uint64_t, std::uint64_t> counts_;
  std::uint64_t n_ = 0;
};

/// 1/2 sum |f1 - f2| over patterns.
inline double tv_distance(const EmpiricalPatternMeasure& a, const EmpiricalPatternMeasure& b) {
  if (a.width() != b.width()) throw std::invalid_argument("tv_distance: width mismatch");
  if (a.samples() == 0 || b.samples() == 0) throw InsufficientDataError("tv_distance of empty measure");
  double sum = 0.0;
  for (const auto& [bits, c] : a.counts()) sum += std::abs(a.frequency(bits) - b.frequency(bits));
  for (const auto& [bits, c] : b.counts()) {
    if (!a.counts().contains(bits)) sum += b.frequency(bits);
  }
  return 0.5 * sum;
}

/// Multinomial sampling error of tv_distance(a, b):
/// 1/2 sum_x sqrt(f_a(1-f_a)/n_a + f_b(1-f_b)/n_b) with pooled frequencies.
inline double tv_sampling_error(const EmpiricalPatternMeasure& a, const EmpiricalPatternMeasure& b) {
  EmpiricalPatternMeasure pooled = a;
  pooled.merge(b);
  const auto na = static_cast<double>(a.samples());
  const auto nb = static_cast<double>(b.samples());
  double sum = 0.0;
  for (const auto& [bits, c] : pooled.counts()) {
    const double f = pooled.frequency(bits);
    sum += std::sqrt(f * (1.0 - f) * (1.0 / na + 1.0 / nb));
  }
  return 0.5 * sum;
}

/// Fraction of samples whose bit k is empty.
inline double zero_density(const EmpiricalPatternMeasure& m, int k) {
  if (k < 0 || k > m.width()) throw std::invalid_argument("zero_density: offset outside pattern");
  if (m.samples() == 0) throw InsufficientDataError("zero_density of empty measure");
  std::uint64_t empty = 0;
  for (const auto& [bits, c] : m.counts()) {
    if (((bits >> k) & 1u) == 0) empty += c;
  }
  return static_cast<double>(empty) / static_cast<double>(m.samples());
}

// ---------------------------------------------------------------------------
// Exponential tails

struct TailFit {
  double rate = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
};

/// Least-squares slope of log S(x), S the empirical survival function,
/// evaluated at the distinct sample values while S >= min_mass (the range
/// where the empirical tail is resolved). rate = -slope.
inline TailFit tail_fit(std::span<const double> samples, double min_mass = 0.01) {
  if (samples.size() < 20) throw InsufficientDataError("tail fit needs at least 20 samples");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  if (s.front() == s.back()) throw InsufficientDataError("tail fit of degenerate sample");
  const auto n = static_cast<double>(s.size());
  const double floor_mass = std::max(min_mass, 5.0 / n);
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i + 1 < s.size() && s[i + 1] == s[i]) continue;
    const double surv = (n - static_cast<double>(i) - 1.0) / n;  // P(X > s[i])
    if (surv < floor_mass) break;
    xs.push_back(s[i]);
    ys.push_back(std::log(surv));
  }
  // two points always give r^2 = 1
  if (xs.size() < 3) throw InsufficientDataError("tail fit: fewer than three resolved points");
  const auto fit = stats::least_squares(xs, ys);
  return {-fit.slope, fit.r_squared, xs.size()};
}

// ---------------------------------------------------------------------------
// Drift of the distance to the nearest zero

/// lambda = (theta^2 - 1)/theta * (q - theta/(theta+1)).
inline double drift_rate(double theta, double q) {
  return (theta * theta - 1.0) / theta * (q - theta / (theta + 1.0));
}

/// q / (q (theta+1) - theta).
inline double drift_asymptote(double theta, double q) { return q / (q * (theta + 1.0) - theta); }

inline void check_drift_parameters(double theta, double q) {
  if (!(theta > 1.0) || !(theta / (theta + 1.0) < q) || q > 1.0) {
    throw std::invalid_argument("drift diagnostic needs theta > 1 and theta/(theta+1) < q <= 1");
  }
}

/// theta^xi0 e^{-lambda t} + q/(q(theta+1) - theta).
inline double drift_bound(double theta, double q, double xi0, double t) {
  check_drift_parameters(theta, q);
  return std::pow(theta, xi0) * std::exp(-drift_rate(theta, q) * t) + drift_asymptote(theta, q);
}

struct DriftProbeResult {
  double time = 0.0;
  Estimate mean_theta_xi;
  double bound = 0.0;
  bool holds = false;
};

/// Compares the sample mean of theta^xi at each probe time with the bound
/// (3 standard errors of slack). `xi_samples[i]` holds the ensemble at times[i].
inline std::vector<DriftProbeResult> drift_diagnostic(std::span<const double> times,
                                                      const std::vector<std::vector<double>>& xi_samples,
                                                      double theta, double q, double xi0) {
  check_drift_parameters(theta, q);
  if (times.size() != xi_samples.size()) throw std::invalid_argument("one sample set per probe time");
  std::vector<DriftProbeResult> out;
  for (std::size_t i = 0; i < times.size(); ++i) {
    std::vector<double> v;
    v.reserve(xi_samples[i].size());
    for (double xi : xi_samples[i]) v.push_back(std::pow(theta, xi));
    DriftProbeResult r;
    r.time = times[i];
    r.mean_theta_xi = stats::mean_estimate(v);
    r.bound = drift_bound(theta, q, xi0, times[i]);
    r.holds = r.mean_theta_xi.value <= r.bound + 3.0 * r.mean_theta_xi.stderr_;
    out.push_back(r);
  }
  return out;
}

inline bool drift_bound_held(std::span<const DriftProbeResult> results) {
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.holds; });
}

}  // namespace kcm
