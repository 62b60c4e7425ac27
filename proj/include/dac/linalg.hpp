#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <initializer_list>
#include <vector>

namespace dac {

/// Relative diagonal jitter levels tried, in order, by jittered_cholesky().
inline const std::vector<double> kDefaultJitterLadder{0.0, 1e-12, 1e-10, 1e-8};
/// Escalated ladder used for a single retry after the default one fails.
inline const std::vector<double> kEscalatedJitterLadder{1e-7, 1e-6};

struct CholeskyFactor {
  Eigen::MatrixXd lower;  // L with L L^T = A + jitter * scale * I
  double jitter = 0.0;    // relative level that succeeded
  [[nodiscard]] double log_det() const;
};

/*!
 * Lower-triangular factorization of a symmetric matrix, adding
 * jitter * scale to the diagonal for each level of `ladder` until it succeeds.
 * Throws NumericalError listing every attempted level on failure.
 */
[[nodiscard]] CholeskyFactor jittered_cholesky(const Eigen::MatrixXd& a, double scale,
                                               const std::vector<double>& ladder =
                                                   kDefaultJitterLadder);

}  // namespace dac
