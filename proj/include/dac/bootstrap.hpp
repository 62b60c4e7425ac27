#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <vector>

#include "dac/estimator.hpp"
#include "dac/models.hpp"
#include "dac/rng.hpp"
#include "dac/spatial.hpp"
#include "dac/stats.hpp"

namespace dac {

/// One network estimate per block of a partition.
struct BlockEstimates {
  std::vector<ParamVector> estimates;

  [[nodiscard]] std::size_t block_count() const noexcept { return estimates.size(); }
};

/// theta-hat_k for every block, evaluated independently.
[[nodiscard]] BlockEstimates block_estimates(const TrainedNetwork& net, const Field& field,
                                             const BlockPartition& partition,
                                             std::size_t workers = 0);

/// Coordinatewise average of the block estimates.
[[nodiscard]] ParamVector mean_estimator(const BlockEstimates& est);

/// B x K x q replicate estimates, stored b-major, then k, then coordinate.
class BootstrapMatrix {
 public:
  BootstrapMatrix(std::size_t replicates, std::size_t blocks, ParamVector center);
  BootstrapMatrix(std::size_t replicates, std::size_t blocks, ParamVector center,
                  std::vector<double> values);

  [[nodiscard]] std::size_t replicates() const noexcept { return b_; }
  [[nodiscard]] std::size_t blocks() const noexcept { return k_; }
  [[nodiscard]] const ParamVector& center() const noexcept { return center_; }
  [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }

  [[nodiscard]] double at(std::size_t b, std::size_t k, std::size_t i) const {
    return values_[(b * k_ + k) * kParamDim + i];
  }
  double& at(std::size_t b, std::size_t k, std::size_t i) {
    return values_[(b * k_ + k) * kParamDim + i];
  }
  /// Replicates of coordinate i in block k, over b.
  [[nodiscard]] std::vector<double> column(std::size_t k, std::size_t i) const;

 private:
  std::size_t b_;
  std::size_t k_;
  ParamVector center_;
  std::vector<double> values_;
};

/// Smallest replicate count accepted for K blocks: max(2, K q + 1).
[[nodiscard]] std::size_t bootstrap_floor(std::size_t blocks) noexcept;

/*!
 * Simulates B fields per block at `center`, cell (k, b) drawing from
 * stream.child(k, b), and stores the network's estimate for each. Results do
 * not depend on the worker count.
 */
[[nodiscard]] BootstrapMatrix parametric_bootstrap(ModelTag model, const ParamVector& center,
                                                   const BlockPartition& partition,
                                                   const TrainedNetwork& net, std::size_t replicates,
                                                   const Stream& stream, std::size_t workers = 0);

/// K = 1 path: estimate on the whole field, then bootstrap around that estimate.
struct SingleDomainResult {
  ParamVector estimate;
  BootstrapMatrix matrix;
};
[[nodiscard]] SingleDomainResult single_domain_bootstrap(const TrainedNetwork& net, const Field& field,
                                                         std::size_t replicates, const Stream& stream,
                                                         std::size_t workers = 0);

/// Per-coordinate SD over replicates (denominator B - 1) for block k.
[[nodiscard]] std::array<double, kParamDim> bootstrap_se(const BootstrapMatrix& m, std::size_t k);

/// Per-coordinate (alpha/2, 1 - alpha/2) empirical quantiles for block k.
[[nodiscard]] std::array<Interval, kParamDim> bootstrap_percentile_ci(const BootstrapMatrix& m,
                                                                      std::size_t k, double alpha);

/// Gaussian-approximation interval estimate +- z sd for block k.
[[nodiscard]] std::array<Interval, kParamDim> bootstrap_normal_ci(const BootstrapMatrix& m,
                                                                  std::size_t k,
                                                                  const ParamVector& estimate,
                                                                  double alpha);

/*!
 * DACR v1, little-endian:
 *   "DACR" | u32 version = 1 | u32 B | u32 K | u32 q | q f64 center
 *   | B*K*q f64 ordered b-major, then k, then coordinate
 * The center's model tag is not stored; readers supply it.
 */
void write_bootstrap(const BootstrapMatrix& m, const std::filesystem::path& path);
[[nodiscard]] BootstrapMatrix read_bootstrap(const std::filesystem::path& path,
                                             ModelTag model = ModelTag::gaussian);

/// CSV with header block,theta1,theta2 (block numbered from 1).
void write_block_estimates(const BlockEstimates& est, const std::filesystem::path& path);
[[nodiscard]] BlockEstimates read_block_estimates(const std::filesystem::path& path,
                                                  ModelTag model = ModelTag::gaussian);

}  // namespace dac
