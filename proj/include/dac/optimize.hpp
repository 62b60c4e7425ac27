#pragma once

#include <Eigen/Core>
#include <functional>

namespace dac {

struct NelderMeadOptions {
  double initial_step = 0.1;  // simplex edge along each axis
  double f_tolerance = 1e-8;  // stop when max-min spread of f falls below this (relative to 1+|f|)
  double x_tolerance = 0.0;   // optional simplex-diameter stop
  int max_iterations = 2000;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Minimizes f from x0 with the standard reflection/expansion/contraction/shrink simplex.
/// Non-finite objective values are treated as +infinity.
[[nodiscard]] NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& x0,
                                           const NelderMeadOptions& options = {});

}  // namespace dac
