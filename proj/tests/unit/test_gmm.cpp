#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "dac/error.hpp"
#include "dac/gmm.hpp"
#include "dac/optimize.hpp"
#include "test_util.hpp"

using namespace dac;

namespace {

BootstrapMatrix random_matrix(std::size_t B, std::size_t K, Stream& s) {
  std::vector<double> v(B * K * kParamDim);
  for (auto& x : v) x = s.normal();
  return BootstrapMatrix(B, K, ParamVector{{0, 0}, ModelTag::gaussian}, v);
}

BlockEstimates random_estimates(std::size_t K, Stream& s) {
  BlockEstimates e;
  for (std::size_t k = 0; k < K; ++k) e.estimates.push_back(ParamVector{{s.normal(), s.normal()}, ModelTag::gaussian});
  return e;
}

Eigen::MatrixXd sample_cov(const Eigen::MatrixXd& c) {
  return c.transpose() * c / static_cast<double>(c.rows() - 1);
}

}  // namespace

TEST(CenterReplicates, Examples) {
  const BootstrapMatrix m(2, 1, ParamVector{{0, 0}, ModelTag::gaussian}, {3, 3, 5, 5});
  const Eigen::MatrixXd c = center_replicates(m);
  EXPECT_EQ(c(0, 0), -1.0);
  EXPECT_EQ(c(1, 0), 1.0);

  Stream s(1);
  const BootstrapMatrix r = random_matrix(5, 3, s);
  const Eigen::MatrixXd z = center_replicates(r);
  EXPECT_LT(z.colwise().mean().cwiseAbs().maxCoeff(), 1e-12);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < 2; ++i) {
      double mu = 0;
      for (std::size_t b = 0; b < 5; ++b) mu += r.at(b, k, i);
      mu /= 5;
      for (std::size_t b = 0; b < 5; ++b)
        EXPECT_NEAR(z(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k * 2 + i)), r.at(b, k, i) - mu, 1e-14);
    }
}

TEST(OptimalWeight, InverseOfSampleCovariance) {
  Stream s(2);
  const Eigen::MatrixXd c = center_replicates(random_matrix(50, 3, s));
  const WeightMatrix w = optimal_weight(c);
  EXPECT_FALSE(w.ridge_applied);
  EXPECT_LT((w.w * sample_cov(c) - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((w.w - w.w.transpose()).cwiseAbs().maxCoeff(), 1e-10 * w.w.cwiseAbs().maxCoeff());
}

TEST(OptimalWeight, ScalarCase) {
  // K = 1, q = 1 embedded in the q = 2 layout: coordinate 1 alone
  const BootstrapMatrix m(4, 1, ParamVector{{0, 0}, ModelTag::gaussian}, {1, 0, 2, 1, 4, 1, 5, 0});
  const WeightMatrix w = optimal_weight(center_replicates(m));
  const std::vector<double> x{1, 2, 4, 5};
  double mu = 3, v = 0;
  for (double t : x) v += (t - mu) * (t - mu);
  v /= 3;
  // coordinates are uncorrelated here, so the inverse is diagonal
  EXPECT_NEAR(w.w(0, 0), 1.0 / v, 1e-12);
}

TEST(OptimalWeight, SingularNeedsRidge) {
  Stream s(3);
  const Eigen::MatrixXd c = center_replicates(random_matrix(4, 3, s));  // B <= Kq
  EXPECT_THROW((void)optimal_weight(c, 0.0), NumericalError);
  const WeightMatrix w = optimal_weight(c);
  EXPECT_TRUE(w.ridge_applied);
  EXPECT_GT(w.ridge_added, 0.0);
  EXPECT_TRUE(w.w.allFinite());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w.w);
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
}

TEST(Combine, SingleBlockReturnsEstimate) {
  Stream s(4);
  const BlockEstimates e = random_estimates(1, s);
  const WeightMatrix w = optimal_weight(center_replicates(random_matrix(40, 1, s)));
  const CombinedEstimate c = combine(e, w, 40);
  EXPECT_EQ(c.theta_c, e.estimates[0]);
  EXPECT_TRUE(c.precision.isApprox(w.w, 1e-14));
  EXPECT_NEAR(gmm_objective(e.estimates[0], e, w), 0.0, 1e-20);
  EXPECT_EQ(c.blocks, 1u);
  EXPECT_EQ(c.replicates, 40u);
}

TEST(Combine, EqualDiagonalBlocksGiveMean) {
  Stream s(5);
  const BlockEstimates e = random_estimates(4, s);
  Eigen::Matrix2d v;
  v << 2.0, 0.3, 0.3, 1.0;
  WeightMatrix w;
  w.w = Eigen::MatrixXd::Zero(8, 8);
  for (int k = 0; k < 4; ++k) w.w.block<2, 2>(2 * k, 2 * k) = v.inverse();
  const CombinedEstimate c = combine(e, w);
  const ParamVector m = mean_estimator(e);
  EXPECT_NEAR(c.theta_c[0], m[0], 1e-12);
  EXPECT_NEAR(c.theta_c[1], m[1], 1e-12);
}

TEST(Combine, MinimizesObjectiveAndSolvesEstimatingEquation) {
  Stream s(6);
  for (int rep = 0; rep < 20; ++rep) {
    const BlockEstimates e = random_estimates(3, s);
    const WeightMatrix w = optimal_weight(center_replicates(random_matrix(60, 3, s)));
    const CombinedEstimate c = combine(e, w);
    // estimating equation sum_{k,k'} W_kk' (theta_c - theta_k') = 0
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t kp = 0; kp < 3; ++kp) {
        Eigen::Vector2d d(c.theta_c[0] - e.estimates[kp][0], c.theta_c[1] - e.estimates[kp][1]);
        g += w.block(k, kp) * d;
      }
    EXPECT_LT(g.cwiseAbs().maxCoeff(), 1e-8);
    const double at_c = gmm_objective(c.theta_c, e, w);
    EXPECT_LE(at_c, gmm_objective(mean_estimator(e), e, w) + 1e-12);
    for (const auto& t : e.estimates) EXPECT_LE(at_c, gmm_objective(t, e, w) + 1e-12);
    // dense minimizer oracle
    const auto f = [&](const Eigen::VectorXd& x) {
      return gmm_objective(ParamVector{{x[0], x[1]}, ModelTag::gaussian}, e, w);
    };
    NelderMeadOptions o;
    o.f_tolerance = 1e-16;
    o.max_iterations = 20000;
    o.initial_step = 0.5;
    const auto r = nelder_mead(f, Eigen::Vector2d(0, 0), o);
    EXPECT_NEAR(r.x[0], c.theta_c[0], 1e-6);
    EXPECT_NEAR(r.x[1], c.theta_c[1], 1e-6);
  }
}

TEST(Objective, MatchesDoubleSum) {
  Stream s(7);
  const BlockEstimates e = random_estimates(3, s);
  const WeightMatrix w = optimal_weight(center_replicates(random_matrix(30, 3, s)));
  const ParamVector th{{0.3, -0.2}, ModelTag::gaussian};
  double brute = 0;
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t kp = 0; kp < 3; ++kp) {
      Eigen::Vector2d a(e.estimates[k][0] - th[0], e.estimates[k][1] - th[1]);
      Eigen::Vector2d b(e.estimates[kp][0] - th[0], e.estimates[kp][1] - th[1]);
      brute += a.dot(w.block(k, kp) * b);
    }
  EXPECT_NEAR(gmm_objective(th, e, w), brute, 1e-12 * std::abs(brute));
  EXPECT_GE(gmm_objective(th, e, w), 0.0);
}

TEST(Combine, AffineEquivariance) {
  Stream s(8);
  const BlockEstimates e = random_estimates(3, s);
  const BootstrapMatrix m = random_matrix(40, 3, s);
  const CombinedEstimate c = combine(e, optimal_weight(center_replicates(m)));
  BlockEstimates e2 = e;
  for (auto& t : e2.estimates) t[0] += 5.0, t[1] -= 2.0;
  std::vector<double> v = m.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += i % 2 == 0 ? 5.0 : -2.0;
  const BootstrapMatrix m2(40, 3, m.center(), v);
  const CombinedEstimate c2 = combine(e2, optimal_weight(center_replicates(m2)));
  EXPECT_NEAR(c2.theta_c[0], c.theta_c[0] + 5.0, 1e-10);
  EXPECT_NEAR(c2.theta_c[1], c.theta_c[1] - 2.0, 1e-10);
  EXPECT_TRUE(c2.precision.isApprox(c.precision, 1e-9));
}

TEST(InverseVariance, Examples) {
  BlockEstimates e;
  e.estimates = {ParamVector{{0, 0}, ModelTag::gaussian}, ParamVector{{5, 5}, ModelTag::gaussian}};
  std::vector<ParamMatrix> v(2);
  v[0] = ParamMatrix::Identity();
  v[1] = 4.0 * ParamMatrix::Identity();
  const ParamVector r = inverse_variance_estimator(e, v);
  EXPECT_NEAR(r[0], 1.0, 1e-14);
  EXPECT_NEAR(r[1], 1.0, 1e-14);
  v[1] = v[0];
  EXPECT_NEAR(inverse_variance_estimator(e, v)[0], 2.5, 1e-14);
  v[1] = ParamMatrix::Zero();
  EXPECT_THROW((void)inverse_variance_estimator(e, v), NumericalError);
}

TEST(InverseVariance, EqualsCombineUnderBlockDiagonalWeights) {
  Stream s(9);
  for (int rep = 0; rep < 10; ++rep) {
    const BlockEstimates e = random_estimates(4, s);
    std::vector<ParamMatrix> v(4);
    WeightMatrix w;
    w.w = Eigen::MatrixXd::Zero(8, 8);
    for (int k = 0; k < 4; ++k) {
      ParamMatrix a;
      a << s.normal(), s.normal(), s.normal(), s.normal();
      v[k] = a * a.transpose() + 0.5 * ParamMatrix::Identity();
      w.w.block<2, 2>(2 * k, 2 * k) = v[k].inverse();
    }
    const ParamVector a = inverse_variance_estimator(e, v);
    const CombinedEstimate c = combine(e, w);
    EXPECT_NEAR(a[0], c.theta_c[0], 1e-10);
    EXPECT_NEAR(a[1], c.theta_c[1], 1e-10);
  }
}

TEST(Wald, QuantileAndIdentity) {
  CombinedEstimate c;
  c.theta_c = ParamVector{{0, 0}, ModelTag::gaussian};
  c.precision = ParamMatrix::Identity();
  const auto ci = wald_ci(c, 0.05);
  EXPECT_NEAR(ci[0].upper, 1.959964, 5e-7);
  EXPECT_NEAR(ci[1].lower, -1.959964, 5e-7);
  EXPECT_THROW((void)wald_ci(c, 0.0), InvalidArgument);
  c.precision = ParamMatrix::Zero();
  EXPECT_THROW((void)wald_ci(c, 0.05), NumericalError);
}

TEST(CombinedJson, Keys) {
  TempDir tmp;
  Stream s(10);
  const BlockEstimates e = random_estimates(2, s);
  const CombinedEstimate c = combine(e, optimal_weight(center_replicates(random_matrix(30, 2, s))), 30);
  write_combined_json(c, 0.1, tmp / "c.json");
  std::ifstream in(tmp / "c.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["B"], 30);
  EXPECT_EQ(j["K"], 2);
  EXPECT_EQ(j["alpha"], 0.1);
  EXPECT_EQ(j["ridge_applied"], false);
  EXPECT_EQ(j["theta_c"][0].get<double>(), c.theta_c[0]);
  EXPECT_EQ(j["ci"].size(), 2u);
  EXPECT_EQ(j["precision"].size(), 2u);
}
