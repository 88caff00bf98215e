#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "reachmon/estimation.hpp"
#include "reachmon/stats.hpp"

using namespace reachmon;

namespace {

// Regularized lower incomplete gamma by its power series (x < a + 1) or
// Lentz continued fraction, independent of the library's quantile code.
double lower_gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  const double log_front = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1.0) {
    double term = 1.0 / a, sum = term;
    for (int k = 1; k < 10000; ++k) {
      term *= x / (a + k);
      sum += term;
      if (term < sum * 1e-17) break;
    }
    return std::exp(log_front) * sum;
  }
  double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return 1.0 - std::exp(log_front) * h;
}

double chi2_quantile_by_bisection(double p, double dof) {
  double lo = 0.0, hi = 1.0;
  while (lower_gamma_p(dof / 2.0, hi / 2.0) < p) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (lower_gamma_p(dof / 2.0, mid / 2.0) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double binomial_tail(int n, double p, int h) {
  double tail = 0.0;
  for (int k = h; k <= n; ++k) {
    tail += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(p) +
                     (n - k) * std::log1p(-p));
  }
  return tail;
}

}  // namespace

TEST(Threshold, MatchesGammaInversion) {
  EXPECT_NEAR(set_threshold(0.05, 1), 3.841458820694124, 1e-9);
  EXPECT_NEAR(set_threshold(0.05, 1), chi2_quantile_by_bisection(0.95, 1), 1e-9);
  for (int dof = 1; dof <= 12; ++dof) {
    for (double beta : {0.5, 0.1, 0.05, 0.01, 0.001}) {
      const double oracle = chi2_quantile_by_bisection(1.0 - beta, dof);
      EXPECT_NEAR(set_threshold(beta, dof), oracle, 1e-8 * oracle) << "dof " << dof << " beta " << beta;
    }
  }
}

TEST(Threshold, TwoDofClosedForm) { EXPECT_NEAR(set_threshold(0.01, 2), -2.0 * std::log(0.01), 1e-10); }

TEST(Threshold, LimitAndMonotone) {
  EXPECT_LT(set_threshold(1.0 - 1e-12, 3), 1e-6);
  for (int dof = 1; dof <= 6; ++dof) {
    double prev = set_threshold(0.001, dof);
    for (double beta = 0.002; beta < 0.99; beta += 0.01) {
      const double t = set_threshold(beta, dof);
      EXPECT_LT(t, prev);
      prev = t;
    }
  }
  EXPECT_THROW(set_threshold(0.0, 1), DomainError);
  EXPECT_THROW(set_threshold(1.0, 1), DomainError);
}

TEST(Stats, WilsonInterval) {
  const auto ci = stats::wilson_interval(8, 10);
  EXPECT_NEAR(ci.lower, 0.4901625, 1e-6);
  EXPECT_NEAR(ci.upper, 0.9433178, 1e-6);
  const auto zero = stats::wilson_interval(0, 50);
  EXPECT_EQ(zero.lower, 0.0);
  EXPECT_GT(zero.upper, 0.0);
}

TEST(Stats, IsotonicFitPoolsViolators) {
  const std::vector<double> v{1, 3, 2, 4}, w{1, 1, 1, 1};
  const auto fit = stats::isotonic_fit(v, w);
  EXPECT_DOUBLE_EQ(fit[0], 1.0);
  EXPECT_DOUBLE_EQ(fit[1], 2.5);
  EXPECT_DOUBLE_EQ(fit[2], 2.5);
  EXPECT_DOUBLE_EQ(fit[3], 4.0);
}

TEST(Stats, IsotonicTestDistinguishesTrends) {
  const std::vector<std::uint64_t> trials{200, 200, 200, 200, 200};
  const std::vector<std::uint64_t> rising{100, 120, 140, 160, 180};
  EXPECT_DOUBLE_EQ(stats::isotonic_residual_test(rising, trials).p_value, 1.0);
  const std::vector<std::uint64_t> falling{180, 160, 140, 120, 100};
  EXPECT_LT(stats::isotonic_residual_test(falling, trials).p_value, 1e-6);
}

TEST(Stats, SignTest) {
  EXPECT_NEAR(stats::sign_test_p_value(15, 20), binomial_tail(20, 0.5, 15), 1e-12);
  EXPECT_LT(stats::sign_test_p_value(15, 20), 0.05);
  EXPECT_GT(stats::sign_test_p_value(14, 20), 0.05);
}

TEST(Stats, LinearFit) {
  const std::vector<double> x{1, 2, 3, 4}, y{3, 5, 7, 9};
  const auto f = stats::linear_fit(x, y);
  EXPECT_NEAR(f.slope, 2.0, 1e-14);
  EXPECT_NEAR(f.intercept, 1.0, 1e-14);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-14);
}

TEST(Stats, BinomialCriticalCount) {
  for (int n : {10, 50, 100}) {
    for (double alpha : {0.05, 1e-3, 1e-6}) {
      const int h = stats::binomial_upper_critical(n, 0.05, alpha);
      EXPECT_LE(binomial_tail(n, 0.05, h), alpha * (1 + 1e-9));
      EXPECT_GT(binomial_tail(n, 0.05, h - 1), alpha);
    }
  }
}

TEST(Stats, KolmogorovSmirnov) {
  testgen::Gen g(42);
  std::vector<double> chi3, chi5;
  for (int i = 0; i < 5000; ++i) {
    double a = 0, b = 0;
    for (int j = 0; j < 3; ++j) a += std::pow(g.normal(), 2);
    for (int j = 0; j < 5; ++j) b += std::pow(g.normal(), 2);
    chi3.push_back(a);
    chi5.push_back(b);
  }
  EXPECT_GT(stats::ks_test_chi_squared(chi3, 3).p_value, 0.01);
  EXPECT_LT(stats::ks_test_chi_squared(chi5, 3).p_value, 1e-6);
}
