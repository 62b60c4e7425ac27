#pragma once

#include <array>
#include <span>
#include <string>

namespace dac {

struct GevParams {
  double location = 0.0;
  double scale = 1.0;
  double shape = 0.0;
};

/// |shape| below this is treated as the Gumbel limit.
inline constexpr double kGumbelShape = 1e-9;
/// MLE searches shape inside (-kShapeBound, kShapeBound).
inline constexpr double kShapeBound = 0.5;

/// 1 + shape (y - location) / scale; the support is where this is positive.
[[nodiscard]] double gev_support(const GevParams& p, double y) noexcept;
[[nodiscard]] bool in_support(const GevParams& p, double y) noexcept;

/// CDF; 0 below and 1 above the support.
[[nodiscard]] double gev_cdf(const GevParams& p, double y);
[[nodiscard]] double gev_quantile(const GevParams& p, double u);
/// -infinity when any observation is outside the support.
[[nodiscard]] double gev_loglik(const GevParams& p, std::span<const double> y);

/// Probability-weighted-moment estimates (Hosking, Wallis and Wood).
[[nodiscard]] GevParams gev_pwm(std::span<const double> y);

struct GevFit {
  GevParams params;
  std::array<double, 3> se{};  // location, scale, shape; from the observed information
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  bool flagged = false;
  std::string reason;  // why the site was flagged
};

/// PWM start refined by Nelder-Mead on the likelihood with |shape| < 0.5.
[[nodiscard]] GevFit fit_gev(std::span<const double> y);

/// Unit Frechet value -1 / log F(y), with F clamped to at most 1 - 1e-12.
/// Throws InvalidArgument outside the support.
[[nodiscard]] double gev_to_unit_frechet(const GevParams& p, double y);

}  // namespace dac
