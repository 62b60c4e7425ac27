#include "dac/maxstable.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <string>

#include "dac/error.hpp"
#include "dac/stats.hpp"

namespace dac {

double BrParams::lambda() const { return std::exp(theta1); }

double BrParams::nu() const { return 2.0 / (1.0 + std::exp(-theta2)); }

BrParams transform_params(double lambda, double nu) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw InvalidArgument("Brown-Resnick range must be positive and finite");
  if (!(nu > 0.0 && nu < 2.0))
    throw InvalidArgument("Brown-Resnick smoothness must lie in (0, 2) for the transform");
  return BrParams{std::log(lambda), std::log(nu / (2.0 - nu))};
}

std::pair<double, double> untransform_params(const BrParams& params) {
  return {params.lambda(), params.nu()};
}

double semivariogram(const BrParams& params, double h) {
  if (h < 0.0) throw InvalidArgument("semivariogram lag must be nonnegative");
  if (h == 0.0) return 0.0;
  return std::pow(h / params.lambda(), params.nu());
}

BrownResnickSampler::BrownResnickSampler(const GridDomain& domain, const BrParams& params,
                                         std::size_t site_cap,
                                         const std::vector<double>& jitter_ladder)
    : domain_(domain) {
  if (!std::isfinite(params.theta1) || !std::isfinite(params.theta2))
    throw InvalidArgument("Brown-Resnick parameters must be finite");
  if (domain.size() > site_cap)
    throw InvalidArgument("Brown-Resnick simulation of " + std::to_string(domain.size()) +
                          " sites exceeds the cap of " + std::to_string(site_cap));
  const auto d = static_cast<Eigen::Index>(domain.size());
  const Eigen::MatrixXd dist = pairwise_distances(domain);
  gamma_.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) gamma_(i, j) = semivariogram(params, dist(i, j));

  if (d > 1) {
    const Eigen::Index m = d - 1;
    Eigen::MatrixXd cov(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        cov(i, j) = gamma_(i + 1, 0) + gamma_(j + 1, 0) - gamma_(i + 1, j + 1);
    const double scale = std::max(cov.diagonal().maxCoeff(), 1e-300);
    lower_ = jittered_cholesky(cov, scale, jitter_ladder).lower;
  }
}

Field BrownResnickSampler::draw(Stream& stream) const {
  const auto d = static_cast<Eigen::Index>(domain_.size());
  Eigen::VectorXd z_max = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd w(d);
  Eigen::VectorXd normals(std::max<Eigen::Index>(d - 1, 0));
  Eigen::VectorXd spectral(d);

  for (Eigen::Index j = 0; j < d; ++j) {
    double arrival = stream.exponential();
    double zeta = 1.0 / arrival;
    while (zeta > z_max[j]) {
      w[0] = 0.0;
      if (d > 1) {
        for (Eigen::Index i = 0; i < d - 1; ++i) normals[i] = stream.normal();
        w.tail(d - 1).noalias() = lower_.triangularView<Eigen::Lower>() * normals;
      }
      spectral = (w.array() - w[j] - gamma_.col(j).array()).exp();
      bool accept = true;
      for (Eigen::Index i = 0; i < j; ++i) {
        if (zeta * spectral[i] >= z_max[i]) {
          accept = false;
          break;
        }
      }
      if (accept) z_max = z_max.cwiseMax(zeta * spectral);
      arrival += stream.exponential();
      zeta = 1.0 / arrival;
    }
  }
  return Field(domain_, std::vector<double>(z_max.data(), z_max.data() + d));
}

Field simulate_brown_resnick(const GridDomain& domain, const BrParams& params, Stream& stream,
                             std::size_t site_cap) {
  return BrownResnickSampler(domain, params, site_cap).draw(stream);
}

double pairwise_ec_theoretical(const BrParams& params, double h) {
  const double g = semivariogram(params, h);
  if (std::isinf(g)) return 2.0;
  return 2.0 * normal_cdf(std::sqrt(g / 2.0));
}

double madogram_extremal_coefficient(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty())
    throw InvalidArgument("madogram needs two nonempty series of equal length");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i] > 0.0) || !(b[i] > 0.0))
      throw InvalidArgument("extremal coefficients need strictly positive (unit Frechet) values");
    sum += std::abs(std::exp(-1.0 / a[i]) - std::exp(-1.0 / b[i]));
  }
  const double nu = 0.5 * sum / static_cast<double>(a.size());
  const double theta = (1.0 + 2.0 * nu) / (1.0 - 2.0 * nu);
  return std::clamp(theta, 1.0, 2.0);
}

std::vector<EcBin> empirical_extremal_coefficient(std::span<const Field> replicates,
                                                  std::size_t max_pairs, std::size_t bins,
                                                  std::uint64_t seed) {
  if (replicates.size() < 2) throw InvalidArgument("extremal coefficients need >= 2 replicates");
  if (bins == 0) throw InvalidArgument("bin count must be positive");
  const GridDomain& dom = replicates.front().domain();
  for (const Field& f : replicates) {
    if (!(f.domain() == dom)) throw InvalidArgument("replicates must share one domain");
    for (double v : f.values())
      if (!(v > 0.0))
        throw InvalidArgument("extremal coefficients need strictly positive (unit Frechet) values");
  }
  const std::size_t d = dom.size();
  if (d < 2) return {};

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  const std::size_t total = d * (d - 1) / 2;
  if (total <= max_pairs) {
    pairs.reserve(total);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j) pairs.emplace_back(i, j);
  } else {
    Stream stream(seed);
    pairs.reserve(max_pairs);
    while (pairs.size() < max_pairs) {
      const std::size_t i = stream.below(d);
      const std::size_t j = stream.below(d);
      if (i != j) pairs.emplace_back(std::min(i, j), std::max(i, j));
    }
  }

  // Transpose to per-site series once.
  const std::size_t n = replicates.size();
  std::vector<double> series(d * n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t s = 0; s < d; ++s) series[s * n + r] = replicates[r][s];

  double max_dist = 0.0;
  for (auto [i, j] : pairs) max_dist = std::max(max_dist, dom.distance(i, j));
  const double width = max_dist / static_cast<double>(bins);

  std::vector<double> sums(bins, 0.0);
  std::vector<std::size_t> counts(bins, 0);
  for (auto [i, j] : pairs) {
    const double h = dom.distance(i, j);
    auto b = static_cast<std::size_t>(std::ceil(h / width));
    b = std::clamp<std::size_t>(b, 1, bins) - 1;
    sums[b] += madogram_extremal_coefficient({series.data() + i * n, n}, {series.data() + j * n, n});
    ++counts[b];
  }

  std::vector<EcBin> out;
  for (std::size_t b = 0; b < bins; ++b) {
    if (counts[b] == 0) continue;
    out.push_back({(static_cast<double>(b) + 0.5) * width,
                   std::clamp(sums[b] / static_cast<double>(counts[b]), 1.0, 2.0), counts[b]});
  }
  return out;
}

void write_ec_csv(const std::vector<EcBin>& bins, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "bin_center_distance,coefficient,pair_count\n" << std::setprecision(10);
  for (const EcBin& b : bins) out << b.center << ',' << b.coefficient << ',' << b.pair_count << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace dac
