#include "dac/linalg.hpp"

#include <cmath>
#include <sstream>

#include "dac/error.hpp"

namespace dac {

double CholeskyFactor::log_det() const {
  return 2.0 * lower.diagonal().array().log().sum();
}

CholeskyFactor jittered_cholesky(const Eigen::MatrixXd& a, double scale,
                                 const std::vector<double>& ladder) {
  if (a.rows() != a.cols()) throw InvalidArgument("cholesky of a non-square matrix");
  if (!a.allFinite()) throw NumericalError("cholesky of a matrix with non-finite entries");
  for (double level : ladder) {
    Eigen::MatrixXd shifted = a;
    if (level > 0.0) shifted.diagonal().array() += level * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd lower = llt.matrixL();
      if (lower.diagonal().minCoeff() > 0.0) return {std::move(lower), level};
    }
  }
  std::ostringstream msg;
  msg << "cholesky factorization failed at relative jitter levels {";
  for (std::size_t i = 0; i < ladder.size(); ++i) msg << (i ? ", " : "") << ladder[i];
  msg << "} (scale " << scale << ")";
  throw NumericalError(msg.str());
}

}  // namespace dac
