#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dac/error.hpp"
#include "dac/maxstable.hpp"
#include "dac/stats.hpp"

using namespace dac;

namespace {

double frechet_cdf(double y) { return y <= 0.0 ? 0.0 : std::exp(-1.0 / y); }

}  // namespace

TEST(Semivariogram, Values) {
  EXPECT_DOUBLE_EQ(semivariogram(transform_params(1, 1), 1.0), 1.0);
  EXPECT_EQ(semivariogram(transform_params(3, 0.7), 0.0), 0.0);
  EXPECT_NEAR(semivariogram(transform_params(2, 0.5), 8.0), 2.0, 1e-14);
  for (double nu : {0.2, 1.0, 1.9}) {
    const BrParams p = transform_params(1.5, nu);
    double prev = 0.0;
    for (double h = 0.1; h < 10; h += 0.1) {
      const double g = semivariogram(p, h);
      EXPECT_GE(g, prev);
      prev = g;
    }
  }
}

TEST(BrTransform, ExamplesAndRoundTrip) {
  const BrParams a = transform_params(1, 1);
  EXPECT_EQ(a.theta1, 0.0);
  EXPECT_EQ(a.theta2, 0.0);
  const BrParams b = transform_params(17, 1);
  EXPECT_DOUBLE_EQ(b.theta1, std::log(17.0));
  const auto [l, n] = untransform_params(transform_params(0.5, 1.5));
  EXPECT_NEAR(l, 0.5, 1e-12);
  EXPECT_NEAR(n, 1.5, 1e-12);
  EXPECT_THROW((void)transform_params(1, 2.0), InvalidArgument);
  EXPECT_THROW((void)transform_params(1, 0.0), InvalidArgument);
  EXPECT_THROW((void)transform_params(-1, 1.0), InvalidArgument);
}

TEST(BrownResnick, PositiveDeterministicAndCapped) {
  const GridDomain d = make_grid(6, 6);
  Stream a(3), b(3);
  const Field f = simulate_brown_resnick(d, transform_params(1, 1), a);
  EXPECT_EQ(f, simulate_brown_resnick(d, transform_params(1, 1), b));
  for (double v : f.values()) EXPECT_GT(v, 0.0);
  Stream c(1);
  EXPECT_THROW((void)simulate_brown_resnick(make_grid(31, 30), transform_params(1, 1), c), InvalidArgument);
  EXPECT_NO_THROW((void)simulate_brown_resnick(make_grid(4, 4), transform_params(1, 1), c, 16));
}

TEST(BrownResnick, UnitFrechetMargins) {
  const GridDomain d = make_grid(3, 3);
  const BrownResnickSampler s(d, transform_params(1, 1));
  const std::size_t n = 2000;
  std::vector<std::vector<double>> sites(d.size());
  for (std::size_t r = 0; r < n; ++r) {
    Stream st(substream_seed(17, r));
    const Field f = s.draw(st);
    for (std::size_t j = 0; j < d.size(); ++j) sites[j].push_back(f[j]);
  }
  for (const auto& v : sites) EXPECT_LT(ks_statistic(v, frechet_cdf), ks_critical(n, 0.001));
}

TEST(BrownResnick, LargeRangeGivesCompleteDependence) {
  const GridDomain d = make_grid(3, 3);
  const BrownResnickSampler s(d, BrParams{20.0, 0.0});
  std::vector<Field> reps;
  for (int r = 0; r < 200; ++r) {
    Stream st(substream_seed(2, r));
    reps.push_back(s.draw(st));
  }
  for (const EcBin& b : empirical_extremal_coefficient(reps, 1000, 3)) EXPECT_LT(b.coefficient, 1.02);
}

TEST(PairwiseEc, Limits) {
  const BrParams p = transform_params(1, 1);
  EXPECT_DOUBLE_EQ(pairwise_ec_theoretical(p, 0.0), 1.0);
  EXPECT_NEAR(pairwise_ec_theoretical(p, 1e6), 2.0, 1e-12);
  double prev = 1.0;
  for (double h = 0.25; h < 5; h += 0.25) {
    const double v = pairwise_ec_theoretical(p, h);
    EXPECT_GE(v, prev);
    EXPECT_LE(v, 2.0);
    prev = v;
  }
}

TEST(PairwiseEc, MatchesBivariateMonteCarlo) {
  // theta(h) = E max(1, exp(W - gamma)) with W ~ N(0, 2 gamma).
  const BrParams p = transform_params(1, 1);
  const double gamma = semivariogram(p, 1.0);
  Stream s(99);
  const int n = 50000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = std::sqrt(2.0 * gamma) * s.normal() - gamma;
    const double v = std::max(1.0, std::exp(w));
    sum += v;
    sum2 += v * v;
  }
  const double m = sum / n, se = std::sqrt((sum2 / n - m * m) / n);
  EXPECT_NEAR(pairwise_ec_theoretical(p, 1.0), m, 3.0 * se);
}

TEST(EmpiricalEc, IdenticalAndIndependent) {
  const GridDomain d = make_grid(4, 4);
  std::vector<Field> same;
  Stream s(5);
  for (int r = 0; r < 30; ++r) same.emplace_back(d, std::vector<double>(16, -1.0 / std::log(s.uniform())));
  for (const EcBin& b : empirical_extremal_coefficient(same, 500, 4)) EXPECT_NEAR(b.coefficient, 1.0, 1e-12);

  std::vector<Field> indep;
  for (int r = 0; r < 500; ++r) {
    std::vector<double> v(16);
    for (auto& x : v) x = -1.0 / std::log(s.uniform());
    indep.emplace_back(d, v);
  }
  for (const EcBin& b : empirical_extremal_coefficient(indep, 500, 4)) EXPECT_NEAR(b.coefficient, 2.0, 0.05);
}

TEST(EmpiricalEc, Errors) {
  const GridDomain d = make_grid(2, 2);
  std::vector<Field> one{Field(d, {1, 1, 1, 1})};
  EXPECT_THROW((void)empirical_extremal_coefficient(one, 10, 2), InvalidArgument);
  std::vector<Field> neg{Field(d, {1, 1, 1, 1}), Field(d, {1, -1, 1, 1})};
  EXPECT_THROW((void)empirical_extremal_coefficient(neg, 10, 2), InvalidArgument);
  std::vector<Field> mixed{Field(d, {1, 1, 1, 1}), Field(make_grid(4, 1), {1, 1, 1, 1})};
  EXPECT_THROW((void)empirical_extremal_coefficient(mixed, 10, 2), InvalidArgument);
}
