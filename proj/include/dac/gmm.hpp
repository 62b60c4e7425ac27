#pragma once

#include <Eigen/Core>
#include <array>
#include <filesystem>
#include <span>

#include "dac/bootstrap.hpp"
#include "dac/models.hpp"
#include "dac/stats.hpp"

namespace dac {

using ParamMatrix = Eigen::Matrix<double, kParamDim, kParamDim>;

/// Row b stacks theta_kb - mean_b(theta_kb) over k (k-major, coordinate minor).
[[nodiscard]] Eigen::MatrixXd center_replicates(const BootstrapMatrix& m);

/// Kq x Kq inverse covariance of the stacked block estimates.
struct WeightMatrix {
  Eigen::MatrixXd w;
  bool ridge_applied = false;
  double ridge_added = 0.0;  // absolute amount added to the diagonal

  [[nodiscard]] std::size_t blocks() const noexcept {
    return static_cast<std::size_t>(w.rows()) / kParamDim;
  }
  [[nodiscard]] ParamMatrix block(std::size_t k, std::size_t kp) const {
    return w.block<kParamDim, kParamDim>(static_cast<Eigen::Index>(k * kParamDim),
                                         static_cast<Eigen::Index>(kp * kParamDim));
  }
};

inline constexpr double kDefaultRidge = 1e-8;
// Eigenvalue ratio below which the covariance counts as ill-conditioned.
inline constexpr double kConditionFloor = 1e-10;

/*!
 * Inverts the (B - 1)-denominator sample covariance of `centered`. When its
 * smallest eigenvalue is below kConditionFloor times the largest,
 * ridge * mean(diagonal) is added to the diagonal first; with ridge = 0 that
 * case throws NumericalError instead.
 */
[[nodiscard]] WeightMatrix optimal_weight(const Eigen::MatrixXd& centered, double ridge = kDefaultRidge);

struct CombinedEstimate {
  ParamVector theta_c;
  ParamMatrix precision;  // sum over (k, k') of the W blocks
  std::size_t replicates = 0;
  std::size_t blocks = 0;
  bool ridge_applied = false;
};

/// One-step estimator (sum W)^-1 sum_{k,k'} W_kk' theta_k'.
[[nodiscard]] CombinedEstimate combine(const BlockEstimates& est, const WeightMatrix& w,
                                       std::size_t replicates = 0);

/// Psi' W Psi with Psi = stacked theta_k - theta.
[[nodiscard]] double gmm_objective(const ParamVector& theta, const BlockEstimates& est,
                                   const WeightMatrix& w);

/// (sum v_k^-1)^-1 sum v_k^-1 theta_k.
[[nodiscard]] ParamVector inverse_variance_estimator(const BlockEstimates& est,
                                                     std::span<const ParamMatrix> variances);

/// sqrt of the diagonal of precision^-1.
[[nodiscard]] std::array<double, kParamDim> standard_errors(const CombinedEstimate& c);

/// theta_c +- z_{alpha/2} * standard error, per coordinate.
[[nodiscard]] std::array<Interval, kParamDim> wald_ci(const CombinedEstimate& c, double alpha);

/// JSON report: theta_c, precision, standard errors, CI, B, K, ridge flag.
void write_combined_json(const CombinedEstimate& c, double alpha, const std::filesystem::path& path);

}  // namespace dac
