#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "dac/linalg.hpp"
#include "dac/rng.hpp"
#include "dac/spatial.hpp"

namespace dac {

/// Brown-Resnick parameters on the estimation scale:
/// theta1 = log(lambda), theta2 = log(nu / (2 - nu)).
struct BrParams {
  double theta1 = 0.0;
  double theta2 = 0.0;

  [[nodiscard]] double lambda() const;
  [[nodiscard]] double nu() const;
};

[[nodiscard]] BrParams transform_params(double lambda, double nu);
[[nodiscard]] std::pair<double, double> untransform_params(const BrParams& params);

/// Power semivariogram (h / lambda)^nu.
[[nodiscard]] double semivariogram(const BrParams& params, double h);

/// Default site cap for exact Brown-Resnick simulation.
inline constexpr std::size_t kBrownResnickSiteCap = 900;

/*!
 * Exact Brown-Resnick sampler by extremal functions.
 *
 * The driving Gaussian process W has variogram 2 * gamma and is pinned to
 * zero at site 0, giving Cov(W(x), W(y)) = gamma(x - x0) + gamma(y - x0) - gamma(x - y).
 * The spectral function rooted at site j is
 * exp(W(x) - W(x_j) - gamma(x - x_j)). Sites are visited in order and a
 * Poisson point is kept only if it does not exceed the running maximum at
 * any earlier site, which yields exact unit Frechet margins.
 */
class BrownResnickSampler {
 public:
  BrownResnickSampler(const GridDomain& domain, const BrParams& params,
                      std::size_t site_cap = kBrownResnickSiteCap,
                      const std::vector<double>& jitter_ladder = kDefaultJitterLadder);

  [[nodiscard]] Field draw(Stream& stream) const;
  [[nodiscard]] const GridDomain& domain() const noexcept { return domain_; }

 private:
  GridDomain domain_;
  Eigen::MatrixXd gamma_;  // semivariogram between every pair of sites
  Eigen::MatrixXd lower_;  // factor of Cov(W) on sites 1..d-1
};

[[nodiscard]] Field simulate_brown_resnick(const GridDomain& domain, const BrParams& params,
                                           Stream& stream,
                                           std::size_t site_cap = kBrownResnickSiteCap);

/// Bivariate extremal coefficient 2 * Phi(sqrt(gamma(h) / 2)).
[[nodiscard]] double pairwise_ec_theoretical(const BrParams& params, double h);

struct EcBin {
  double center = 0.0;
  double coefficient = 0.0;
  std::size_t pair_count = 0;
};

/*!
 * Binned F-madogram extremal coefficients from replicated unit Frechet fields.
 * Uses every pair when there are at most max_pairs, otherwise a seeded sample
 * of max_pairs pairs. Bins split (0, max distance] into equal widths; empty
 * bins are dropped. Values are clamped to [1, 2].
 */
[[nodiscard]] std::vector<EcBin> empirical_extremal_coefficient(std::span<const Field> replicates,
                                                                std::size_t max_pairs,
                                                                std::size_t bins,
                                                                std::uint64_t seed = 0);

/// Pair estimate (1 + 2 nu_F) / (1 - 2 nu_F) from two replicate series.
[[nodiscard]] double madogram_extremal_coefficient(std::span<const double> a,
                                                   std::span<const double> b);

/// CSV with columns bin_center_distance,coefficient,pair_count.
void write_ec_csv(const std::vector<EcBin>& bins, const std::filesystem::path& path);

}  // namespace dac
