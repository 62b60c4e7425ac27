#pragma once

#include <functional>
#include <span>
#include <vector>

namespace dac {

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  [[nodiscard]] bool contains(double x) const noexcept { return lower <= x && x <= upper; }
};

[[nodiscard]] double normal_cdf(double x);
/// Standard normal quantile; p in (0, 1).
[[nodiscard]] double normal_quantile(double p);

[[nodiscard]] double mean(std::span<const double> x);
/// Sample standard deviation with denominator n - 1 (0 for n < 2).
[[nodiscard]] double sample_sd(std::span<const double> x);

/// Empirical quantile with linear interpolation between order statistics
/// (h = (n - 1) p). Takes a copy because it sorts.
[[nodiscard]] double quantile_linear(std::vector<double> x, double p);

/// Kolmogorov-Smirnov sup distance between the sample ECDF and `cdf`.
[[nodiscard]] double ks_statistic(std::vector<double> sample,
                                  const std::function<double(double)>& cdf);
/// Two-sample KS sup distance.
[[nodiscard]] double ks_two_sample(std::vector<double> a, std::vector<double> b);

/// Asymptotic KS critical values at level alpha.
[[nodiscard]] double ks_critical(std::size_t n, double alpha);
[[nodiscard]] double ks_two_sample_critical(std::size_t n, std::size_t m, double alpha);

}  // namespace dac
