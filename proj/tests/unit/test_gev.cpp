#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dac/error.hpp"
#include "dac/gev.hpp"
#include "dac/rng.hpp"
#include "dac/stats.hpp"

using namespace dac;

namespace {

std::vector<double> draw(const GevParams& p, std::size_t n, std::uint64_t seed) {
  Stream s(seed);
  std::vector<double> y(n);
  for (auto& v : y) v = gev_quantile(p, s.uniform());
  return y;
}

}  // namespace

TEST(Gev, CdfQuantileRoundTrip) {
  for (double xi : {-0.3, 0.0, 1e-12, 0.2}) {
    const GevParams p{2.0, 1.5, xi};
    for (double u : {0.01, 0.3, 0.5, 0.9, 0.999}) EXPECT_NEAR(gev_cdf(p, gev_quantile(p, u)), u, 1e-12);
  }
  const GevParams g{0, 1, 0};
  EXPECT_NEAR(gev_cdf(g, 0.0), std::exp(-1.0), 1e-15);
  // Frechet-type lower endpoint and Weibull-type upper endpoint
  EXPECT_EQ(gev_cdf(GevParams{0, 1, 0.5}, -3.0), 0.0);
  EXPECT_EQ(gev_cdf(GevParams{0, 1, -0.5}, 3.0), 1.0);
  EXPECT_FALSE(in_support(GevParams{0, 1, 0.5}, -2.0));
  EXPECT_TRUE(in_support(GevParams{0, 1, 0.5}, -1.9));
}

TEST(Gev, LoglikMatchesDensity) {
  const GevParams p{1.0, 2.0, 0.1};
  const std::vector<double> y{0.5, 1.0, 3.0, 7.0};
  double brute = 0;
  for (double v : y) {
    const double h = 1e-6;
    brute += std::log((gev_cdf(p, v + h) - gev_cdf(p, v - h)) / (2 * h));
  }
  EXPECT_NEAR(gev_loglik(p, y), brute, 1e-6);
  EXPECT_EQ(gev_loglik(GevParams{0, 1, 0.5}, std::vector<double>{-3.0}), -std::numeric_limits<double>::infinity());
}

TEST(Gev, GumbelFit) {
  const GevParams truth{10.0, 2.0, 0.0};
  const auto y = draw(truth, 2000, 3);
  const GevFit f = fit_gev(y);
  ASSERT_FALSE(f.flagged) << f.reason;
  EXPECT_NEAR(f.params.location, 10.0, 3 * f.se[0]);
  EXPECT_NEAR(f.params.scale, 2.0, 3 * f.se[1]);
  EXPECT_NEAR(f.params.shape, 0.0, 3 * f.se[2]);
  EXPECT_GE(f.loglik, gev_loglik(gev_pwm(y), y));
}

TEST(Gev, RecoversShapeWithinStandardErrors) {
  int inside = 0;
  const GevParams truth{0.0, 1.0, 0.2};
  for (std::uint64_t r = 0; r < 40; ++r) {
    const GevFit f = fit_gev(draw(truth, 129, 100 + r));
    ASSERT_FALSE(f.flagged) << f.reason;
    inside += std::abs(f.params.shape - 0.2) <= 3 * f.se[2];
  }
  EXPECT_GE(inside, 37);
}

TEST(Gev, FlagsDegenerateSeries) {
  EXPECT_TRUE(fit_gev(std::vector<double>(30, 4.0)).flagged);
  EXPECT_EQ(fit_gev(std::vector<double>(30, 4.0)).reason, "constant series");
  EXPECT_TRUE(fit_gev(std::vector<double>{1.0, 2.0}).flagged);
  // unit Frechet has shape 1, outside the search box
  EXPECT_TRUE(fit_gev(draw(GevParams{1, 1, 1}, 500, 9)).flagged);
}

TEST(Gev, UnitFrechetTransform) {
  const GevParams p{3.0, 0.5, 0.1};
  EXPECT_NEAR(gev_to_unit_frechet(p, gev_quantile(p, 0.5)), 1.0 / std::numbers::ln2, 1e-12);
  EXPECT_NEAR(gev_to_unit_frechet(GevParams{0, 1, 0}, 0.0), 1.0, 1e-14);
  // just below the upper endpoint 2, clamped at F = 1 - 1e-12
  const double top = gev_to_unit_frechet(GevParams{0, 1, -0.5}, 2.0 - 1e-9);
  EXPECT_TRUE(std::isfinite(top));
  EXPECT_NEAR(top, -1.0 / std::log1p(-1e-12), 1e-3 * top);
  EXPECT_THROW((void)gev_to_unit_frechet(GevParams{0, 1, 0.5}, -3.0), InvalidArgument);
  const auto y = draw(p, 3000, 4);
  std::vector<double> z;
  for (double v : y) z.push_back(gev_to_unit_frechet(p, v));
  EXPECT_LT(ks_statistic(z, [](double t) { return t <= 0 ? 0.0 : std::exp(-1.0 / t); }), ks_critical(z.size(), 0.01));
}
