#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace reachmon::stats {

/// Inverse CDF of chi^2(dof) at probability `p`.
double chi_squared_quantile(double p, double dof);
double chi_squared_cdf(double x, double dof);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Wilson score interval for `successes` out of `trials` (z = 1.96 by default).
Interval wilson_interval(std::uint64_t successes, std::uint64_t trials, double z = 1.959963984540054);

/// Weighted pool-adjacent-violators fit of a nondecreasing sequence.
std::vector<double> isotonic_fit(std::span<const double> values, std::span<const double> weights);

struct IsotonicTest {
  double statistic = 0.0;  // weighted chi-square distance to the isotonic fit
  int dof = 0;             // points minus distinct fitted levels
  double p_value = 1.0;
};

/// Tests the hypothesis that binomial proportions are nondecreasing.
IsotonicTest isotonic_residual_test(std::span<const std::uint64_t> successes,
                                    std::span<const std::uint64_t> trials);

/// One-sided sign test: P[Binomial(n, 1/2) >= positives].
double sign_test_p_value(std::uint64_t positives, std::uint64_t n);

struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r_squared = 0.0;
};

LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

/// Kolmogorov-Smirnov statistic of `samples` against chi^2(dof), plus its
/// asymptotic p-value.
struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};
KsResult ks_test_chi_squared(std::vector<double> samples, double dof);

/// Upper critical count h such that P[Binomial(n, p) >= h] <= alpha.
int binomial_upper_critical(int n, double p, double alpha);

}  // namespace reachmon::stats
