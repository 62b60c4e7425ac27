#include "dac/gmm.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "dac/error.hpp"

namespace dac {

namespace {

Eigen::Map<const Eigen::Matrix<double, kParamDim, 1>> as_vec(const ParamVector& p) {
  return Eigen::Map<const Eigen::Matrix<double, kParamDim, 1>>(p.values.data());
}

void check_dims(const BlockEstimates& est, const WeightMatrix& w) {
  if (est.estimates.empty()) throw InvalidArgument("no block estimates");
  if (w.w.rows() != w.w.cols() ||
      static_cast<std::size_t>(w.w.rows()) != est.estimates.size() * kParamDim)
    throw InvalidArgument("weight matrix is " + std::to_string(w.w.rows()) + "x" +
                          std::to_string(w.w.cols()) + " but K q = " +
                          std::to_string(est.estimates.size() * kParamDim));
}

Eigen::LLT<ParamMatrix> factor_precision(const ParamMatrix& j) {
  Eigen::LLT<ParamMatrix> llt(j);
  if (llt.info() != Eigen::Success || !j.allFinite())
    throw NumericalError("combined precision matrix is not positive definite");
  return llt;
}

}  // namespace

Eigen::MatrixXd center_replicates(const BootstrapMatrix& m) {
  const std::size_t b_count = m.replicates(), k_count = m.blocks();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(b_count), static_cast<Eigen::Index>(k_count * kParamDim));
  for (std::size_t b = 0; b < b_count; ++b)
    for (std::size_t k = 0; k < k_count; ++k)
      for (std::size_t i = 0; i < kParamDim; ++i)
        out(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k * kParamDim + i)) = m.at(b, k, i);
  out.rowwise() -= out.colwise().mean();
  return out;
}

WeightMatrix optimal_weight(const Eigen::MatrixXd& centered, double ridge) {
  if (!(ridge >= 0.0)) throw InvalidArgument("ridge must be nonnegative");
  const Eigen::Index b = centered.rows(), p = centered.cols();
  if (b < 2 || p == 0) throw InvalidArgument("need at least 2 replicates and one column");
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p, p);
  s.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose(), 1.0 / static_cast<double>(b - 1));
  s = s.selfadjointView<Eigen::Lower>();

  WeightMatrix out;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
  if (!(hi > 0.0) || lo < kConditionFloor * hi) {
    if (ridge == 0.0 || !(hi > 0.0))
      throw NumericalError("bootstrap covariance is singular (B = " + std::to_string(b) +
                           ", K q = " + std::to_string(p) + "); increase B or use a ridge");
    out.ridge_added = ridge * s.diagonal().mean();
    s.diagonal().array() += out.ridge_added;
    out.ridge_applied = true;
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) throw NumericalError("bootstrap covariance factorization failed");
  out.w = llt.solve(Eigen::MatrixXd::Identity(p, p));
  out.w = 0.5 * (out.w + out.w.transpose()).eval();
  return out;
}

CombinedEstimate combine(const BlockEstimates& est, const WeightMatrix& w, std::size_t replicates) {
  check_dims(est, w);
  const std::size_t k_count = est.estimates.size();
  ParamMatrix j = ParamMatrix::Zero();
  Eigen::Matrix<double, kParamDim, 1> rhs = Eigen::Matrix<double, kParamDim, 1>::Zero();
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t kp = 0; kp < k_count; ++kp) {
      const ParamMatrix wk = w.block(k, kp);
      j += wk;
      rhs += wk * as_vec(est.estimates[kp]);
    }
  }
  j = 0.5 * (j + j.transpose()).eval();
  const auto llt = factor_precision(j);
  const Eigen::Matrix<double, kParamDim, 1> theta = llt.solve(rhs);

  CombinedEstimate c;
  c.theta_c.model = est.estimates.front().model;
  for (std::size_t i = 0; i < kParamDim; ++i) c.theta_c[i] = theta(static_cast<Eigen::Index>(i));
  // a single block solves the equation exactly; skip the rounding of the solve
  if (k_count == 1) c.theta_c = est.estimates.front();
  c.precision = j;
  c.replicates = replicates;
  c.blocks = k_count;
  c.ridge_applied = w.ridge_applied;
  return c;
}

double gmm_objective(const ParamVector& theta, const BlockEstimates& est, const WeightMatrix& w) {
  check_dims(est, w);
  Eigen::VectorXd psi(w.w.rows());
  for (std::size_t k = 0; k < est.estimates.size(); ++k)
    for (std::size_t i = 0; i < kParamDim; ++i)
      psi(static_cast<Eigen::Index>(k * kParamDim + i)) = est.estimates[k][i] - theta[i];
  return psi.dot(w.w * psi);
}

ParamVector inverse_variance_estimator(const BlockEstimates& est, std::span<const ParamMatrix> variances) {
  if (est.estimates.empty() || variances.size() != est.estimates.size())
    throw InvalidArgument("need one variance matrix per block estimate");
  ParamMatrix total = ParamMatrix::Zero();
  Eigen::Matrix<double, kParamDim, 1> rhs = Eigen::Matrix<double, kParamDim, 1>::Zero();
  for (std::size_t k = 0; k < variances.size(); ++k) {
    Eigen::LLT<ParamMatrix> llt(variances[k]);
    if (llt.info() != Eigen::Success)
      throw NumericalError("variance matrix of block " + std::to_string(k + 1) + " is singular");
    const ParamMatrix inv = llt.solve(ParamMatrix::Identity());
    total += inv;
    rhs += inv * as_vec(est.estimates[k]);
  }
  const Eigen::Matrix<double, kParamDim, 1> theta = factor_precision(total).solve(rhs);
  ParamVector out;
  out.model = est.estimates.front().model;
  for (std::size_t i = 0; i < kParamDim; ++i) out[i] = theta(static_cast<Eigen::Index>(i));
  return out;
}

std::array<double, kParamDim> standard_errors(const CombinedEstimate& c) {
  const ParamMatrix cov = factor_precision(c.precision).solve(ParamMatrix::Identity());
  std::array<double, kParamDim> se{};
  for (std::size_t i = 0; i < kParamDim; ++i)
    se[i] = std::sqrt(cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
  return se;
}

std::array<Interval, kParamDim> wald_ci(const CombinedEstimate& c, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const auto se = standard_errors(c);
  std::array<Interval, kParamDim> ci{};
  for (std::size_t i = 0; i < kParamDim; ++i)
    ci[i] = {c.theta_c[i] - z * se[i], c.theta_c[i] + z * se[i]};
  return ci;
}

void write_combined_json(const CombinedEstimate& c, double alpha, const std::filesystem::path& path) {
  const auto se = standard_errors(c);
  const auto ci = wald_ci(c, alpha);
  nlohmann::ordered_json j;
  j["model"] = std::string(to_string(c.theta_c.model));
  j["theta_c"] = c.theta_c.values;
  j["precision"] = {{c.precision(0, 0), c.precision(0, 1)}, {c.precision(1, 0), c.precision(1, 1)}};
  j["standard_errors"] = se;
  j["alpha"] = alpha;
  j["ci"] = {{ci[0].lower, ci[0].upper}, {ci[1].lower, ci[1].upper}};
  j["B"] = c.replicates;
  j["K"] = c.blocks;
  j["ridge_applied"] = c.ridge_applied;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace dac
