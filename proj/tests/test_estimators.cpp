#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "kcm/estimators.hpp"

using namespace kcm;

namespace {

// Width-1 measure: the front is empty, bit 1 occupied with the given
// frequency out of `n` samples.
EmpiricalPatternMeasure two_point(std::uint64_t ones, std::uint64_t n) {
  EmpiricalPatternMeasure m(1);
  if (ones > 0) m.add(Pattern{0b10, 1}, ones);
  if (n > ones) m.add(Pattern{0b00, 1}, n - ones);
  return m;
}

EmpiricalPatternMeasure random_measure(std::mt19937_64& rng, int width, int samples) {
  EmpiricalPatternMeasure m(width);
  std::uniform_int_distribution<std::uint64_t> bits(0, (std::uint64_t{1} << width) - 1);
  for (int i = 0; i < samples; ++i) m.add(Pattern{bits(rng) << 1, width});
  return m;
}

}  // namespace

TEST(Stats, MeanVarianceCovariance) {
  const std::vector<double> xs{1, 2, 3, 4, 5};
  EXPECT_DOUBLE_EQ(stats::mean(xs), 3.0);
  EXPECT_DOUBLE_EQ(stats::variance(xs), 2.5);
  EXPECT_NEAR(stats::mean_estimate(xs).stderr_, std::sqrt(2.5 / 5), 1e-15);
  EXPECT_DOUBLE_EQ(stats::covariance_estimate(xs, xs).value, 2.5);
  const std::vector<double> neg{-1, -2, -3, -4, -5};
  EXPECT_DOUBLE_EQ(stats::covariance_estimate(xs, neg).value, -2.5);
  EXPECT_THROW(stats::mean(std::vector<double>{}), InsufficientDataError);
  EXPECT_THROW(stats::variance(std::vector<double>{1.0}), InsufficientDataError);
}

TEST(Stats, KsDetectsConstantSample) {
  const auto bad = stats::ks_test_standard_normal(std::vector<double>(500, 0.0));
  EXPECT_NEAR(bad.statistic, 0.5, 1e-12);
  EXPECT_LT(bad.p_value, 1e-10);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  std::vector<double> good(2000);
  for (double& x : good) x = z(rng);
  EXPECT_GT(stats::ks_test_standard_normal(good).p_value, 0.01);
}

TEST(Stats, KolmogorovLaw) {
  EXPECT_DOUBLE_EQ(stats::kolmogorov_q(0.0), 1.0);
  EXPECT_NEAR(stats::kolmogorov_q(1.3581), 0.05, 1e-3);
  EXPECT_LT(stats::kolmogorov_q(3.0), 1e-7);
}

TEST(Stats, LeastSquaresExactLine) {
  const std::vector<double> xs{0, 1, 2, 3}, ys{1, 3, 5, 7};
  const auto f = stats::least_squares(xs, ys);
  EXPECT_DOUBLE_EQ(f.slope, 2.0);
  EXPECT_DOUBLE_EQ(f.intercept, 1.0);
  EXPECT_DOUBLE_EQ(f.r_squared, 1.0);
}

TEST(Velocity, EstimateAndResidual) {
  const std::vector<double> xs{-10, -12, -8, -10};
  const auto v = velocity_estimate(xs, 10.0);
  EXPECT_DOUBLE_EQ(v.value, -1.0);
  // v = p nu - q holds exactly for v = -0.85, nu = 0.5, q = 0.9
  const auto r = velocity_formula_residual({-0.85, 0.01}, {0.5, 0.02}, 0.9);
  EXPECT_NEAR(r.value, 0.0, 1e-15);
  EXPECT_NEAR(r.stderr_, std::hypot(0.01, 0.002), 1e-15);

  std::vector<FrontPath> paths(2);
  paths[0].record(0.0, 0);
  paths[0].record(1.0, -3);
  paths[1].record(0.0, 0);
  paths[1].record(2.0, -5);
  EXPECT_DOUBLE_EQ(velocity_estimate(paths, 3.0).value, -4.0 / 3.0);
}

TEST(Covariance, IndependentIncrementsAreUncorrelated) {
  std::mt19937_64 rng(2);
  std::bernoulli_distribution b(0.5);
  IncrementTable table(2000, std::vector<double>(50));
  for (auto& row : table) {
    for (double& x : row) x = b(rng) ? 1.0 : -1.0;
  }
  const auto c0 = covariance_lag(table, 10, 0);
  EXPECT_NEAR(c0.value, 1.0, 0.01);
  const auto c1 = covariance_lag(table, 10, 5);
  EXPECT_LT(std::abs(c1.value), 4.0 * c1.stderr_);
  const auto series = diffusivity_series(table, 1, 50, 20);
  EXPECT_NEAR(series.s2.value, 1.0, 5.0 * series.s2.stderr_);
}

// Moving-average increments xi_n = e_n + e_{n-1}: Var 2, lag-1 covariance 1,
// so s^2 = 4.
TEST(Covariance, SeriesRecoversMovingAverage) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  IncrementTable table(400, std::vector<double>(400));
  for (auto& row : table) {
    double prev = z(rng);
    for (double& x : row) {
      const double e = z(rng);
      x = e + prev;
      prev = e;
    }
  }
  const auto series = diffusivity_series(table, 1, 400, 50);
  EXPECT_NEAR(series.lags[0].value, 2.0, 0.05);
  EXPECT_NEAR(series.lags[1].value, 1.0, 0.05);
  EXPECT_NEAR(series.s2.value, 4.0, 0.2);
}

TEST(PatternMeasure, TotalVariationOfBernoulli) {
  const auto a = two_point(500, 1000), b = two_point(750, 1000);
  EXPECT_DOUBLE_EQ(tv_distance(a, b), 0.25);
  EXPECT_DOUBLE_EQ(zero_density(a, 1), 0.5);
  EXPECT_DOUBLE_EQ(zero_density(b, 0), 1.0);
  EXPECT_GT(tv_sampling_error(a, b), 0.0);
}

TEST(PatternMeasure, MetricProperties) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_measure(rng, 4, 200), b = random_measure(rng, 4, 300), c = random_measure(rng, 4, 100);
    EXPECT_EQ(tv_distance(a, a), 0.0);
    EXPECT_NEAR(tv_distance(a, b), tv_distance(b, a), 1e-15);
    EXPECT_LE(tv_distance(a, c), tv_distance(a, b) + tv_distance(b, c) + 1e-15);
    EXPECT_GE(tv_distance(a, b), 0.0);
    EXPECT_LE(tv_distance(a, b), 1.0);
    // marginalising cannot increase the distance
    EXPECT_LE(tv_distance(a.restricted(2), b.restricted(2)), tv_distance(a, b) + 1e-15);
  }
}

TEST(PatternMeasure, RejectsOccupiedFront) {
  EmpiricalPatternMeasure m(2);
  EXPECT_THROW(m.add(Pattern{0b001, 2}), std::invalid_argument);
  EXPECT_THROW(m.add(Pattern{0b000, 3}), std::invalid_argument);
}

TEST(Tail, ExponentialRate) {
  std::mt19937_64 rng(5);
  std::exponential_distribution<double> e(2.0);
  std::vector<double> xs(20000);
  for (double& x : xs) x = e(rng);
  const auto f = tail_fit(xs);
  EXPECT_NEAR(f.rate, 2.0, 0.1);
  EXPECT_GT(f.r_squared, 0.99);
}

TEST(Tail, RejectsUnresolvedSamples) {
  EXPECT_THROW(tail_fit(std::vector<double>(20, 1.0)), InsufficientDataError);
  EXPECT_THROW(tail_fit(std::vector<double>(100, 1.0)), InsufficientDataError);
  // 97 zeros and three ones: a single resolved point
  std::vector<double> xs(100, 0.0);
  xs[0] = xs[1] = xs[2] = 1.0;
  EXPECT_THROW(tail_fit(xs), InsufficientDataError);
}

TEST(Drift, Constants) {
  EXPECT_NEAR(drift_rate(1.2, 0.9), 0.13, 1e-12);
  EXPECT_NEAR(drift_asymptote(1.2, 0.9), 0.9 / 0.78, 1e-12);
  EXPECT_NEAR(drift_bound(1.2, 0.9, 0.0, 0.0), 1.0 + 0.9 / 0.78, 1e-12);
  EXPECT_THROW(drift_bound(1.2, 0.5, 1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(drift_bound(1.0, 0.9, 1.0, 1.0), std::invalid_argument);
}

TEST(Drift, DiagnosticFlagsExcess) {
  const std::vector<double> times{0.0, 100.0};
  const std::vector<std::vector<double>> ok{{2, 3, 2, 3}, {0, 1, 0, 1}};
  EXPECT_TRUE(drift_bound_held(drift_diagnostic(times, ok, 1.2, 0.9, 3.0)));
  const std::vector<std::vector<double>> bad{{2, 3, 2, 3}, {30, 31, 30, 31}};
  EXPECT_FALSE(drift_bound_held(drift_diagnostic(times, bad, 1.2, 0.9, 3.0)));
}
