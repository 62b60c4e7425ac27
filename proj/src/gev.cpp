#include "dac/gev.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "dac/error.hpp"
#include "dac/optimize.hpp"

namespace dac {

namespace {

constexpr double kEulerGamma = 0.5772156649015329;
constexpr double kInf = std::numeric_limits<double>::infinity();

double neg_loglik(const GevParams& p, std::span<const double> y) {
  const double ll = gev_loglik(p, y);
  return std::isfinite(ll) ? -ll : kInf;
}

}  // namespace

double gev_support(const GevParams& p, double y) noexcept {
  return 1.0 + p.shape * (y - p.location) / p.scale;
}

bool in_support(const GevParams& p, double y) noexcept {
  if (!(p.scale > 0.0) || !std::isfinite(y)) return false;
  return std::abs(p.shape) < kGumbelShape || gev_support(p, y) > 0.0;
}

double gev_cdf(const GevParams& p, double y) {
  if (!(p.scale > 0.0)) throw InvalidArgument("GEV scale must be positive");
  if (std::abs(p.shape) < kGumbelShape) return std::exp(-std::exp(-(y - p.location) / p.scale));
  const double t = gev_support(p, y);
  if (t <= 0.0) return p.shape > 0.0 ? 0.0 : 1.0;
  return std::exp(-std::pow(t, -1.0 / p.shape));
}

double gev_quantile(const GevParams& p, double u) {
  if (!(u > 0.0 && u < 1.0)) throw InvalidArgument("GEV quantile needs u in (0, 1)");
  const double l = -std::log(u);
  if (std::abs(p.shape) < kGumbelShape) return p.location - p.scale * std::log(l);
  return p.location + p.scale * (std::pow(l, -p.shape) - 1.0) / p.shape;
}

double gev_loglik(const GevParams& p, std::span<const double> y) {
  if (!(p.scale > 0.0)) return -kInf;
  const double ls = std::log(p.scale);
  double ll = 0.0;
  if (std::abs(p.shape) < kGumbelShape) {
    for (double v : y) {
      const double z = (v - p.location) / p.scale;
      ll += -ls - z - std::exp(-z);
    }
    return ll;
  }
  for (double v : y) {
    const double t = gev_support(p, v);
    if (!(t > 0.0)) return -kInf;
    const double lt = std::log(t);
    ll += -ls - (1.0 + 1.0 / p.shape) * lt - std::exp(-lt / p.shape);
  }
  return ll;
}

GevParams gev_pwm(std::span<const double> y) {
  const std::size_t n = y.size();
  if (n < 3) throw InvalidArgument("PWM estimation needs at least 3 observations");
  std::vector<double> x(y.begin(), y.end());
  std::sort(x.begin(), x.end());
  double b0 = 0.0, b1 = 0.0, b2 = 0.0;
  const double nn = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double j = static_cast<double>(i);
    b0 += x[i];
    b1 += x[i] * j / (nn - 1.0);
    b2 += x[i] * j * (j - 1.0) / ((nn - 1.0) * (nn - 2.0));
  }
  b0 /= nn;
  b1 /= nn;
  b2 /= nn;
  const double l1 = b0, l2 = 2.0 * b1 - b0, l3 = 6.0 * b2 - 6.0 * b1 + b0;
  if (!(l2 > 0.0)) throw NumericalError("PWM estimation failed: zero dispersion");
  // Hosking's k is minus the shape used here.
  const double c = 2.0 / (3.0 + l3 / l2) - std::log(2.0) / std::log(3.0);
  double k = 7.8590 * c + 2.9554 * c * c;
  k = std::clamp(k, -0.45, 0.45);
  GevParams p;
  if (std::abs(k) < 1e-6) {
    p.scale = l2 / std::log(2.0);
    p.location = l1 - kEulerGamma * p.scale;
    p.shape = 0.0;
    return p;
  }
  const double g = std::tgamma(1.0 + k);
  p.scale = l2 * k / ((1.0 - std::pow(2.0, -k)) * g);
  p.location = l1 - p.scale * (1.0 - g) / k;
  p.shape = -k;
  return p;
}

GevFit fit_gev(std::span<const double> y) {
  GevFit fit;
  const std::size_t n = y.size();
  if (n < 3) {
    fit.flagged = true;
    fit.reason = "fewer than 3 observations";
    return fit;
  }
  const double mu = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : y) ss += (v - mu) * (v - mu);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 1e-12 * std::max(1.0, std::abs(mu)))) {
    fit.flagged = true;
    fit.reason = "constant series";
    fit.params = {mu, 0.0, 0.0};
    return fit;
  }

  // Fit on the standardized scale so the simplex step is scale free.
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = (y[i] - mu) / sd;
  GevParams start;
  try {
    start = gev_pwm(z);
  } catch (const std::exception&) {
    start = {-kEulerGamma * std::sqrt(6.0) / M_PI, std::sqrt(6.0) / M_PI, 0.0};
  }
  // PWM can leave observations outside the support; shrink the shape until all fit.
  for (int i = 0; i < 60 && !std::isfinite(gev_loglik(start, z)); ++i) start.shape *= 0.5;
  if (!std::isfinite(gev_loglik(start, z))) start.shape = 0.0;

  const auto objective = [&](const Eigen::VectorXd& x) {
    if (!(std::abs(x[2]) < kShapeBound)) return kInf;
    return neg_loglik(GevParams{x[0], std::exp(x[1]), x[2]}, z);
  };
  Eigen::VectorXd x0(3);
  x0 << start.location, std::log(start.scale), start.shape;
  NelderMeadOptions opts;
  opts.initial_step = 0.1;
  opts.f_tolerance = 1e-12;
  opts.max_iterations = 4000;
  NelderMeadResult r = nelder_mead(objective, x0, opts);
  fit.iterations = r.iterations;
  // One restart from the optimum guards against a collapsed simplex.
  NelderMeadResult r2 = nelder_mead(objective, r.x, opts);
  fit.iterations += r2.iterations;
  if (r2.value <= r.value) r = r2;
  fit.converged = r.converged && std::isfinite(r.value);

  fit.params = {mu + sd * r.x[0], sd * std::exp(r.x[1]), r.x[2]};
  fit.loglik = gev_loglik(fit.params, y);
  if (!fit.converged) {
    fit.flagged = true;
    fit.reason = "likelihood search did not converge";
    return fit;
  }
  if (std::abs(fit.params.shape) > kShapeBound - 1e-3) {
    fit.flagged = true;
    fit.reason = "shape estimate at the constraint boundary";
  }

  // Observed information by central differences on (location, scale, shape).
  const std::array<double, 3> theta{fit.params.location, fit.params.scale, fit.params.shape};
  const std::array<double, 3> h{1e-4 * sd, 1e-4 * fit.params.scale, 1e-4};
  const auto f = [&](std::array<double, 3> t) { return neg_loglik(GevParams{t[0], t[1], t[2]}, y); };
  Eigen::Matrix3d info;
  const double f0 = f(theta);
  for (int i = 0; i < 3; ++i) {
    for (int j = i; j < 3; ++j) {
      auto tpp = theta, tpm = theta, tmp = theta, tmm = theta;
      if (i == j) {
        tpp[i] += h[i];
        tmm[i] -= h[i];
        info(i, i) = (f(tpp) - 2.0 * f0 + f(tmm)) / (h[i] * h[i]);
        continue;
      }
      tpp[i] += h[i], tpp[j] += h[j];
      tpm[i] += h[i], tpm[j] -= h[j];
      tmp[i] -= h[i], tmp[j] += h[j];
      tmm[i] -= h[i], tmm[j] -= h[j];
      info(i, j) = info(j, i) = (f(tpp) - f(tpm) - f(tmp) + f(tmm)) / (4.0 * h[i] * h[j]);
    }
  }
  Eigen::LLT<Eigen::Matrix3d> llt(info);
  if (!info.allFinite() || llt.info() != Eigen::Success) {
    fit.flagged = true;
    if (fit.reason.empty()) fit.reason = "observed information is not positive definite";
    fit.se = {kInf, kInf, kInf};
    return fit;
  }
  const Eigen::Matrix3d cov = llt.solve(Eigen::Matrix3d::Identity());
  for (int i = 0; i < 3; ++i) fit.se[static_cast<std::size_t>(i)] = std::sqrt(cov(i, i));
  return fit;
}

double gev_to_unit_frechet(const GevParams& p, double y) {
  if (!in_support(p, y)) throw InvalidArgument("value outside the GEV support");
  static const double z_max = -1.0 / std::log1p(-1e-12);
  // -1/log F has the closed form t^(1/shape) (exp(z) for Gumbel), which avoids
  // underflow of F in the lower tail.
  const double z = std::abs(p.shape) < kGumbelShape ? std::exp((y - p.location) / p.scale)
                                                      : std::pow(gev_support(p, y), 1.0 / p.shape);
  return std::clamp(z, std::numeric_limits<double>::min(), z_max);
}

}  // namespace dac
