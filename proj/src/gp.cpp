#include "dac/gp.hpp"

#include <cmath>
#include <numbers>

#include "dac/error.hpp"
#include "dac/optimize.hpp"

namespace dac {

namespace {

void check_finite(const GpParams& p) {
  if (!std::isfinite(p.log_tau2) || !std::isfinite(p.log_phi2))
    throw InvalidArgument("Gaussian process parameters must be finite");
}

}  // namespace

Eigen::MatrixXd exp_covariance(const GpParams& params, const Eigen::MatrixXd& dist) {
  check_finite(params);
  const double tau2 = params.tau2();
  const double phi2 = params.phi2();
  return (tau2 * (-dist.array() / phi2).exp()).matrix();
}

GpSampler::GpSampler(const GridDomain& domain, const GpParams& params,
                     const std::vector<double>& jitter_ladder)
    : domain_(domain),
      factor_(jittered_cholesky(exp_covariance(params, pairwise_distances(domain)), params.tau2(),
                                jitter_ladder)) {}

Field GpSampler::draw(Stream& stream) const {
  const auto d = static_cast<Eigen::Index>(domain_.size());
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < d; ++i) z[i] = stream.normal();
  const Eigen::VectorXd y = factor_.lower.triangularView<Eigen::Lower>() * z;
  return Field(domain_, std::vector<double>(y.data(), y.data() + d));
}

Field simulate_gp(const GridDomain& domain, const GpParams& params, Stream& stream) {
  return GpSampler(domain, params).draw(stream);
}

// --- stitched sampler ------------------------------------------------------

struct StitchedGpSampler::TilePlan {
  std::vector<std::size_t> sites;
  std::vector<std::size_t> neighbours;
  std::vector<std::pair<long, long>> key;  // neighbour offsets relative to the tile origin
};

struct StitchedGpSampler::Conditional {
  Eigen::MatrixXd gain;   // Sigma_bn Sigma_nn^{-1}
  Eigen::MatrixXd lower;  // factor of the conditional covariance
};

StitchedGpSampler::StitchedGpSampler(const GridDomain& domain, const GpParams& params,
                                     std::size_t block_nx, std::size_t block_ny, std::size_t halo)
    : domain_(domain), params_(params), block_nx_(block_nx), block_ny_(block_ny) {
  check_finite(params);
  const BlockPartition tiles = partition(domain, block_nx, block_ny);
  const std::size_t tiles_x = domain.nx() / block_nx;
  std::vector<bool> done(domain.size(), false);
  for (std::size_t k = 0; k < tiles.block_count(); ++k) {
    TilePlan plan;
    const auto idx = tiles.indices(k);
    plan.sites.assign(idx.begin(), idx.end());
    const long x0 = static_cast<long>((k % tiles_x) * block_nx);
    const long y0 = static_cast<long>((k / tiles_x) * block_ny);
    const long h = static_cast<long>(halo);
    for (long y = std::max(0L, y0 - h); y < std::min<long>(static_cast<long>(domain.ny()), y0 + static_cast<long>(block_ny) + h); ++y) {
      for (long x = std::max(0L, x0 - h); x < std::min<long>(static_cast<long>(domain.nx()), x0 + static_cast<long>(block_nx) + h); ++x) {
        const auto j = static_cast<std::size_t>(y) * domain.nx() + static_cast<std::size_t>(x);
        if (!done[j]) continue;
        plan.neighbours.push_back(j);
        plan.key.emplace_back(x - x0, y - y0);
      }
    }
    for (std::size_t j : plan.sites) done[j] = true;
    plans_.push_back(std::move(plan));
  }
}

StitchedGpSampler::~StitchedGpSampler() = default;

const StitchedGpSampler::Conditional& StitchedGpSampler::conditional_for(const TilePlan& plan) const {
  std::lock_guard lock(cache_mutex_);
  auto it = cache_.find(plan.key);
  if (it != cache_.end()) return *it->second;

  // Geometry only matters through relative offsets, so build on local coordinates.
  const auto b = static_cast<Eigen::Index>(plan.sites.size());
  const auto n = static_cast<Eigen::Index>(plan.neighbours.size());
  std::vector<std::pair<double, double>> pts;
  pts.reserve(static_cast<std::size_t>(b + n));
  for (std::size_t j : plan.sites) pts.push_back(domain_.location(j));
  for (std::size_t j : plan.neighbours) pts.push_back(domain_.location(j));
  Eigen::MatrixXd dist(b + n, b + n);
  for (Eigen::Index i = 0; i < b + n; ++i)
    for (Eigen::Index j = 0; j < b + n; ++j)
      dist(i, j) = std::hypot(pts[i].first - pts[j].first, pts[i].second - pts[j].second);
  const Eigen::MatrixXd cov = exp_covariance(params_, dist);

  auto cond = std::make_shared<Conditional>();
  if (n == 0) {
    cond->gain = Eigen::MatrixXd::Zero(b, 0);
    cond->lower = jittered_cholesky(cov, params_.tau2()).lower;
  } else {
    const Eigen::MatrixXd s_nn = cov.bottomRightCorner(n, n);
    const Eigen::MatrixXd s_bn = cov.topRightCorner(b, n);
    const CholeskyFactor f_nn = jittered_cholesky(s_nn, params_.tau2());
    // gain = s_bn * s_nn^{-1} via two triangular solves on the transpose.
    Eigen::MatrixXd tmp = f_nn.lower.triangularView<Eigen::Lower>().solve(s_bn.transpose());
    cond->gain = f_nn.lower.transpose().triangularView<Eigen::Upper>().solve(tmp).transpose();
    Eigen::MatrixXd s_cond = cov.topLeftCorner(b, b) - cond->gain * s_bn.transpose();
    s_cond = 0.5 * (s_cond + s_cond.transpose());
    cond->lower = jittered_cholesky(s_cond, params_.tau2()).lower;
  }
  it = cache_.emplace(plan.key, std::move(cond)).first;
  return *it->second;
}

Field StitchedGpSampler::draw(Stream& stream) const {
  std::vector<double> values(domain_.size(), 0.0);
  for (const TilePlan& plan : plans_) {
    const Conditional& c = conditional_for(plan);
    const auto b = static_cast<Eigen::Index>(plan.sites.size());
    Eigen::VectorXd z(b);
    for (Eigen::Index i = 0; i < b; ++i) z[i] = stream.normal();
    Eigen::VectorXd y = c.lower.triangularView<Eigen::Lower>() * z;
    if (!plan.neighbours.empty()) {
      Eigen::VectorXd yn(static_cast<Eigen::Index>(plan.neighbours.size()));
      for (std::size_t i = 0; i < plan.neighbours.size(); ++i)
        yn[static_cast<Eigen::Index>(i)] = values[plan.neighbours[i]];
      y += c.gain * yn;
    }
    for (Eigen::Index i = 0; i < b; ++i) values[plan.sites[static_cast<std::size_t>(i)]] = y[i];
  }
  return Field(domain_, std::move(values));
}

// --- likelihood --------------------------------------------------------------

double gp_loglik(const Field& field, const Eigen::MatrixXd& dist, const GpParams& params) {
  const auto d = static_cast<Eigen::Index>(field.size());
  if (dist.rows() != d || dist.cols() != d)
    throw InvalidArgument("distance matrix does not match the field");
  const CholeskyFactor f = jittered_cholesky(exp_covariance(params, dist), params.tau2());
  const Eigen::Map<const Eigen::VectorXd> y(field.values().data(), d);
  const Eigen::VectorXd w = f.lower.triangularView<Eigen::Lower>().solve(y);
  return -0.5 * (w.squaredNorm() + f.log_det() + static_cast<double>(d) * std::log(2.0 * std::numbers::pi));
}

GpMleResult gp_mle(const Field& field, const Eigen::MatrixXd& dist, const GpParams& init,
                   int max_iterations, double tolerance) {
  check_finite(init);
  const auto clamp = [](double v) { return std::clamp(v, -kGpLogParamBound, kGpLogParamBound); };
  const auto objective = [&](const Eigen::VectorXd& x) {
    try {
      return -gp_loglik(field, dist, GpParams{clamp(x[0]), clamp(x[1])});
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  NelderMeadOptions opts;
  opts.initial_step = 0.25;
  opts.f_tolerance = tolerance;
  opts.max_iterations = max_iterations;
  const Eigen::VectorXd x0 = Eigen::Vector2d(clamp(init.log_tau2), clamp(init.log_phi2));
  const NelderMeadResult nm = nelder_mead(objective, x0, opts);

  GpMleResult out;
  out.estimate = GpParams{clamp(nm.x[0]), clamp(nm.x[1])};
  out.report.iterations = nm.iterations;
  out.report.loglik = -nm.value;
  out.report.converged = nm.converged;
  return out;
}

}  // namespace dac
