#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "kcm/randomness.hpp"

using namespace kcm;

// Known-answer vectors of the reference Philox4x32-10 implementation.
TEST(Philox, KnownAnswers) {
  EXPECT_EQ(Philox4x32::apply({0, 0, 0, 0}, {0, 0}),
            (Philox4x32::Counter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(Philox4x32::apply({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}),
            (Philox4x32::Counter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(Philox4x32::apply({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}),
            (Philox4x32::Counter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(ClockCollection, AccessorsArePure) {
  const ClockCollection c(42, 7, 0.3);
  for (std::int64_t x : {-5, 0, 17}) {
    for (std::uint64_t n : {1u, 2u, 99u}) {
      const double t = c.ring_time(x, n);
      const int b = c.coin(x, n);
      for (int rep = 0; rep < 10; ++rep) {
        EXPECT_EQ(c.ring_time(x, n), t);
        EXPECT_EQ(c.coin(x, n), b);
      }
    }
  }
}

TEST(ClockCollection, RingTimesIncrease) {
  const ClockCollection c(1, 0, 0.5);
  for (std::int64_t x = -20; x <= 20; ++x) {
    double prev = 0.0;
    for (std::uint64_t n = 1; n <= 20; ++n) {
      const double t = c.ring_time(x, n);
      EXPECT_GT(t, prev);
      EXPECT_NEAR(t - prev, c.increment(x, n), 1e-12);
      prev = t;
    }
  }
  EXPECT_THROW((void)c.ring_time(0, 0), std::invalid_argument);
}

TEST(ClockCollection, DrawMatchesAccessors) {
  const ClockCollection c(3, 9, 0.25);
  for (std::int64_t x = -10; x <= 10; ++x) {
    for (std::uint64_t n = 1; n <= 10; ++n) {
      const auto d = c.draw(x, n);
      EXPECT_EQ(d.increment, c.increment(x, n));
      EXPECT_EQ(c.coin_from_uniform(d.coin_uniform), c.coin(x, n));
    }
  }
}

TEST(ClockCollection, ExponentialMean) {
  const ClockCollection c(2024, 1, 0.1);
  double sum = 0.0;
  const int sites = 100000;
  for (int x = 0; x < sites; ++x) sum += c.ring_time(x, 1);
  EXPECT_NEAR(sum / sites, 1.0, 0.02);
}

TEST(ClockCollection, CoinMean) {
  const ClockCollection c(2024, 2, 0.1);
  double sum = 0.0;
  const int keys = 1000000;
  for (int k = 0; k < keys; ++k) sum += c.coin(k / 10, static_cast<std::uint64_t>(k % 10) + 1);
  EXPECT_NEAR(sum / keys, 0.1, 0.001);
}

TEST(ClockCollection, DegenerateCoins) {
  const ClockCollection zero(5, 0, 0.0), one(5, 0, 1.0);
  for (int x = 0; x < 1000; ++x) {
    EXPECT_EQ(zero.coin(x, 1), 0);
    EXPECT_EQ(one.coin(x, 1), 1);
  }
  EXPECT_THROW(ClockCollection(1, 1, 1.5), std::invalid_argument);
}

TEST(ClockCollection, ShiftCovariance) {
  const ClockCollection c(77, 3, 0.4);
  for (std::uint64_t n = 1; n <= 100; ++n) {
    EXPECT_EQ(c.shifted(5).ring_time(0, n), c.ring_time(5, n));
    EXPECT_EQ(c.shifted(5).coin(0, n), c.coin(5, n));
  }
  for (std::int64_t x = -30; x <= 30; ++x) {
    EXPECT_EQ(c.shifted(0).increment(x, 1), c.increment(x, 1));
    EXPECT_EQ(c.shifted(3).shifted(-3).increment(x, 2), c.increment(x, 2));
    EXPECT_EQ(c.shifted(3).shifted(4).increment(x, 3), c.shifted(7).increment(x, 3));
    EXPECT_EQ(c.shifted(-11).coin(x, 4), c.coin(x - 11, 4));
  }
}

TEST(ClockCollection, DistinctCollectionsUncorrelated) {
  const ClockCollection a(9, 1, 0.5), b(9, 2, 0.5), c(10, 1, 0.5);
  const int n = 100000;
  auto corr = [&](const ClockCollection& u, const ClockCollection& v) {
    double su = 0, sv = 0, suu = 0, svv = 0, suv = 0;
    for (int x = 0; x < n; ++x) {
      const double p = u.increment(x, 1), q = v.increment(x, 1);
      su += p;
      sv += q;
      suu += p * p;
      svv += q * q;
      suv += p * q;
    }
    const double cov = suv / n - (su / n) * (sv / n);
    return cov / std::sqrt((suu / n - su * su / n / n) * (svv / n - sv * sv / n / n));
  };
  EXPECT_LT(std::abs(corr(a, b)), 0.01);
  EXPECT_LT(std::abs(corr(a, c)), 0.01);
}
