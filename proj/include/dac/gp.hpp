#pragma once

#include <Eigen/Core>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "dac/linalg.hpp"
#include "dac/rng.hpp"
#include "dac/spatial.hpp"

namespace dac {

/// Exponential-covariance Gaussian process parameters on the log scale.
struct GpParams {
  double log_tau2 = 0.0;  // log variance
  double log_phi2 = 0.0;  // log range; distance is divided by phi2 itself

  [[nodiscard]] double tau2() const { return std::exp(log_tau2); }
  [[nodiscard]] double phi2() const { return std::exp(log_phi2); }
};

/// tau2 * exp(-dist / phi2), entrywise.
[[nodiscard]] Eigen::MatrixXd exp_covariance(const GpParams& params, const Eigen::MatrixXd& dist);

/// Caches the covariance factor of one (domain, params) pair so repeated
/// draws cost one triangular matrix-vector product each.
class GpSampler {
 public:
  GpSampler(const GridDomain& domain, const GpParams& params,
            const std::vector<double>& jitter_ladder = kDefaultJitterLadder);

  [[nodiscard]] Field draw(Stream& stream) const;

  [[nodiscard]] const GridDomain& domain() const noexcept { return domain_; }
  [[nodiscard]] double jitter() const noexcept { return factor_.jitter; }

 private:
  GridDomain domain_;
  CholeskyFactor factor_;
};

/// One exact draw from N(0, Sigma(params)) on the grid.
[[nodiscard]] Field simulate_gp(const GridDomain& domain, const GpParams& params, Stream& stream);

/*!
 * Approximate full-domain sampler for grids too large to factor densely.
 *
 * Tiles the domain into block_nx x block_ny tiles and simulates them in
 * row-major order, each conditioned on already simulated sites within
 * `halo` grid steps of the tile. Conditional factors are cached per
 * neighbourhood geometry. Not exact; results are labelled "stitched".
 */
class StitchedGpSampler {
 public:
  StitchedGpSampler(const GridDomain& domain, const GpParams& params, std::size_t block_nx,
                    std::size_t block_ny, std::size_t halo);
  ~StitchedGpSampler();

  [[nodiscard]] Field draw(Stream& stream) const;

 private:
  struct TilePlan;
  struct Conditional;

  const Conditional& conditional_for(const TilePlan& plan) const;

  GridDomain domain_;
  GpParams params_;
  std::size_t block_nx_;
  std::size_t block_ny_;
  std::vector<TilePlan> plans_;
  mutable std::mutex cache_mutex_;
  mutable std::map<std::vector<std::pair<long, long>>, std::shared_ptr<const Conditional>> cache_;
};

/// Mean-zero multivariate normal log density, one factorization, no inverse.
[[nodiscard]] double gp_loglik(const Field& field, const Eigen::MatrixXd& dist,
                               const GpParams& params);

struct MleReport {
  int iterations = 0;
  double loglik = 0.0;
  bool converged = false;
};

struct GpMleResult {
  GpParams estimate;
  MleReport report;
};

/// Box bound applied to both log parameters during maximization.
inline constexpr double kGpLogParamBound = 30.0;

/// Nelder-Mead maximization of gp_loglik over (log_tau2, log_phi2), clamped to
/// [-30, 30]. Returns the best point found even if not converged.
[[nodiscard]] GpMleResult gp_mle(const Field& field, const Eigen::MatrixXd& dist,
                                 const GpParams& init, int max_iterations = 2000,
                                 double tolerance = 1e-8);

}  // namespace dac
