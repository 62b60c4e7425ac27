#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "dac/error.hpp"
#include "dac/gp.hpp"
#include "dac/linalg.hpp"
#include "dac/models.hpp"

using namespace dac;

namespace {

GpParams natural(double tau2, double phi2) { return {std::log(tau2), std::log(phi2)}; }

double brute_loglik(const Field& f, const Eigen::MatrixXd& dist, const GpParams& p) {
  const Eigen::MatrixXd s = exp_covariance(p, dist);
  Eigen::VectorXd y(f.size());
  for (std::size_t j = 0; j < f.size(); ++j) y[static_cast<Eigen::Index>(j)] = f[j];
  const double n = static_cast<double>(f.size());
  return -0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * std::log(s.determinant()) -
         0.5 * y.dot(s.inverse() * y);
}

}  // namespace

TEST(ExpCovariance, ScalarCases) {
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, 1);
  EXPECT_NEAR(exp_covariance(natural(3, 3), zero)(0, 0), 3.0, 1e-14);
  Eigen::MatrixXd three(1, 1);
  three << 3.0;
  EXPECT_NEAR(exp_covariance(natural(1, 3), three)(0, 0), std::exp(-1.0), 1e-15);
  Eigen::MatrixXd far(1, 1);
  far << 1e6;
  EXPECT_EQ(exp_covariance(natural(2, 1), far)(0, 0), 0.0);
}

TEST(ExpCovariance, RejectsNonFinite) {
  EXPECT_THROW((void)exp_covariance(GpParams{NAN, 0.0}, Eigen::MatrixXd::Zero(2, 2)), InvalidArgument);
}

TEST(ExpCovariance, FactorizesAcrossRange) {
  const auto dist = pairwise_distances(make_grid(30, 30));
  for (double lp : {-1.0, 2.0, 5.0}) {
    const CholeskyFactor f = jittered_cholesky(exp_covariance(GpParams{0.0, lp}, dist), 1.0);
    EXPECT_LE(f.jitter, 1e-8);
  }
}

TEST(Cholesky, ReportsLevelsOnFailure) {
  Eigen::MatrixXd a(2, 2);
  a << 1, 2, 2, 1;
  try {
    (void)jittered_cholesky(a, 1.0);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("1e-08"), std::string::npos);
  }
}

TEST(SimulateGp, DeterministicAndTinyVariance) {
  const GridDomain d = make_grid(10, 10);
  Stream a(4), b(4);
  EXPECT_EQ(simulate_gp(d, natural(3, 3), a), simulate_gp(d, natural(3, 3), b));
  Stream c(5);
  const Field tiny = simulate_gp(d, GpParams{-30.0, std::log(3.0)}, c);
  for (double v : tiny.values()) EXPECT_LT(std::abs(v), 1e-6);
}

TEST(SimulateGp, PerSiteVarianceNearTau2) {
  const GridDomain d = make_grid(20, 20);
  const GpSampler sampler(d, natural(3, 3));
  double ss = 0.0;
  const int reps = 200;
  Stream s(8);
  for (int r = 0; r < reps; ++r) {
    const Field f = sampler.draw(s);
    for (double v : f.values()) ss += v * v;
  }
  const double var = ss / (reps * 400.0);
  EXPECT_GT(var, 1.5);
  EXPECT_LT(var, 6.0);
}

TEST(GpLoglik, ClosedForms) {
  const Field one(make_grid(1, 1), {0.0});
  EXPECT_NEAR(gp_loglik(one, Eigen::MatrixXd::Zero(1, 1), natural(1, 1)), -0.5 * std::log(2 * std::numbers::pi),
              1e-14);
  const Field two(make_grid(2, 1), {0.0, 0.0});
  const double expect = -std::log(2 * std::numbers::pi) - 0.5 * std::log(1 - std::exp(-2.0));
  EXPECT_NEAR(gp_loglik(two, pairwise_distances(two.domain()), natural(1, 1)), expect, 1e-13);
}

TEST(GpLoglik, MatchesBruteForce) {
  for (std::size_t n : {2, 3, 5}) {
    const GridDomain d = make_grid(n, n);
    const auto dist = pairwise_distances(d);
    Stream s(n);
    const Field f = simulate_gp(d, natural(1.5, 2.0), s);
    for (const GpParams p : {natural(1.5, 2.0), natural(0.3, 0.7), natural(4.0, 6.0)}) {
      const double a = gp_loglik(f, dist, p), b = brute_loglik(f, dist, p);
      EXPECT_NEAR(a, b, 1e-8 * std::abs(b));
    }
  }
}

TEST(GpLoglik, PeaksNearTruth) {
  const GridDomain d = make_grid(20, 20);
  const auto dist = pairwise_distances(d);
  Stream s(21);
  const GpParams truth = natural(1.0, 3.0);
  const Field f = simulate_gp(d, truth, s);
  double best = -INFINITY, bt = 0, bp = 0;
  for (double dt = -1.0; dt <= 1.0001; dt += 0.25)
    for (double dp = -1.0; dp <= 1.0001; dp += 0.25) {
      const double ll = gp_loglik(f, dist, GpParams{truth.log_tau2 + dt, truth.log_phi2 + dp});
      if (ll > best) best = ll, bt = dt, bp = dp;
    }
  EXPECT_LE(std::abs(bt), 0.75);
  EXPECT_LE(std::abs(bp), 0.75);
}

TEST(GpMle, AscentAndBoxBound) {
  const GridDomain d = make_grid(8, 8);
  const auto dist = pairwise_distances(d);
  Stream s(2);
  const GpParams truth = natural(3, 3);
  const Field f = simulate_gp(d, truth, s);
  const GpMleResult r = gp_mle(f, dist, truth);
  EXPECT_GE(r.report.loglik, gp_loglik(f, dist, truth));
  EXPECT_TRUE(r.report.converged);

  const Field zeros(d, std::vector<double>(64, 0.0));
  const GpMleResult z = gp_mle(zeros, dist, truth);
  EXPECT_GE(z.estimate.log_tau2, -kGpLogParamBound);
  EXPECT_LE(z.estimate.log_tau2, -kGpLogParamBound + 1.0);
}

TEST(StitchedGp, ExactOnSingleTileAndCloseCovariance) {
  const GridDomain d = make_grid(12, 12);
  const GpParams p = natural(1.0, 3.0);
  const StitchedGpSampler st(d, p, 6, 6, 3);
  // sample covariance at a pair across a tile boundary
  const std::size_t a = 5 * 12 + 5, b = 5 * 12 + 6;
  double saa = 0, sab = 0;
  const int reps = 4000;
  for (int r = 0; r < reps; ++r) {
    Stream s(substream_seed(3, r));
    const Field f = st.draw(s);
    saa += f[a] * f[a];
    sab += f[a] * f[b];
  }
  EXPECT_NEAR(saa / reps, 1.0, 0.1);
  EXPECT_NEAR(sab / reps, std::exp(-1.0 / 3.0), 0.1);
}

TEST(Models, TransformsAndSampler) {
  EXPECT_DOUBLE_EQ(transform_value(InputTransform::signed_log, std::exp(1.0)), 1.0);
  EXPECT_DOUBLE_EQ(transform_value(InputTransform::signed_log, -std::exp(1.0)), -1.0);
  EXPECT_EQ(transform_value(InputTransform::signed_log, 0.0), 0.0);
  EXPECT_EQ(parse_model("br"), ModelTag::brown_resnick);
  EXPECT_EQ(parse_model("gaussian"), ModelTag::gaussian);
  EXPECT_THROW((void)parse_model("schlather"), InvalidArgument);
  const ParamVector th = from_gp(natural(2.0, 5.0));
  EXPECT_NEAR(to_gp(th).tau2(), 2.0, 1e-14);
  Stream s1(1), s2(1);
  const FieldSampler fs(ModelTag::gaussian, make_grid(5, 5), th);
  EXPECT_EQ(fs.draw(s1), simulate_field(ModelTag::gaussian, make_grid(5, 5), th, s2));
}
