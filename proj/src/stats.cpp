#include "reachmon/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>

#include "reachmon/errors.hpp"

namespace reachmon::stats {

double chi_squared_quantile(double p, double dof) {
  if (!(p >= 0.0 && p < 1.0)) throw DomainError("chi_squared_quantile: p must lie in [0, 1)");
  if (!(dof > 0.0)) throw DomainError("chi_squared_quantile: dof must be positive");
  if (p == 0.0) return 0.0;
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(dof), p);
}

double chi_squared_cdf(double x, double dof) {
  if (x <= 0.0) return 0.0;
  return boost::math::cdf(boost::math::chi_squared_distribution<double>(dof), x);
}

Interval wilson_interval(std::uint64_t successes, std::uint64_t trials, double z) {
  if (trials == 0) return {0.0, 1.0};
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  // The bounds are exactly 0 and 1 at the extremes; the formula leaves rounding residue.
  const double lower = successes == 0 ? 0.0 : std::max(0.0, center - half);
  const double upper = successes == trials ? 1.0 : std::min(1.0, center + half);
  return {lower, upper};
}

std::vector<double> isotonic_fit(std::span<const double> values, std::span<const double> weights) {
  struct Block {
    double sum;
    double weight;
    std::size_t count;
  };
  std::vector<Block> blocks;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    blocks.push_back({values[i] * w, w, 1});
    while (blocks.size() > 1) {
      const Block& hi = blocks.back();
      const Block& lo = blocks[blocks.size() - 2];
      if (lo.sum / lo.weight <= hi.sum / hi.weight) break;
      Block merged{lo.sum + hi.sum, lo.weight + hi.weight, lo.count + hi.count};
      blocks.pop_back();
      blocks.back() = merged;
    }
  }
  std::vector<double> fit;
  fit.reserve(values.size());
  for (const auto& b : blocks) fit.insert(fit.end(), b.count, b.sum / b.weight);
  return fit;
}

IsotonicTest isotonic_residual_test(std::span<const std::uint64_t> successes,
                                    std::span<const std::uint64_t> trials) {
  std::vector<double> rates, weights;
  for (std::size_t i = 0; i < successes.size(); ++i) {
    if (trials[i] == 0) continue;
    rates.push_back(static_cast<double>(successes[i]) / static_cast<double>(trials[i]));
    weights.push_back(static_cast<double>(trials[i]));
  }
  IsotonicTest result;
  if (rates.empty()) return result;
  const auto fit = isotonic_fit(rates, weights);
  std::vector<double> levels(fit);
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  result.dof = static_cast<int>(rates.size() - levels.size());
  for (std::size_t i = 0; i < rates.size(); ++i) {
    // Floor the variance so a fitted rate of exactly 0 or 1 stays finite.
    const double var = std::max(fit[i] * (1.0 - fit[i]), 0.25 / weights[i]);
    result.statistic += weights[i] * (rates[i] - fit[i]) * (rates[i] - fit[i]) / var;
  }
  result.p_value = result.dof == 0 || result.statistic == 0.0
                       ? 1.0
                       : 1.0 - chi_squared_cdf(result.statistic, result.dof);
  return result;
}

double sign_test_p_value(std::uint64_t positives, std::uint64_t n) {
  if (n == 0) return 1.0;
  if (positives == 0) return 1.0;
  boost::math::binomial_distribution<double> dist(static_cast<double>(n), 0.5);
  return boost::math::cdf(boost::math::complement(dist, static_cast<double>(positives) - 1.0));
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("linear_fit: need >= 2 paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw DomainError("linear_fit: x values are all equal");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

KsResult ks_test_chi_squared(std::vector<double> samples, double dof) {
  KsResult result;
  if (samples.empty()) return result;
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = chi_squared_cdf(samples[i], dof);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  result.statistic = d;
  // Asymptotic Kolmogorov tail with the Stephens small-sample correction.
  const double root_n = std::sqrt(n);
  const double lambda = (root_n + 0.12 + 0.11 / root_n) * d;
  double tail = lambda < 0.2 ? 1.0 : 0.0;
  for (int k = 1; k <= 100 && lambda >= 0.2; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    tail += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  result.p_value = std::clamp(tail, 0.0, 1.0);
  return result;
}

int binomial_upper_critical(int n, double p, double alpha) {
  boost::math::binomial_distribution<double> dist(n, p);
  for (int h = 0; h <= n; ++h) {
    const double tail = h == 0 ? 1.0 : boost::math::cdf(boost::math::complement(dist, h - 1.0));
    if (tail <= alpha) return h;
  }
  return n + 1;
}

}  // namespace reachmon::stats
