#include "dac/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>

#include "dac/binary_io.hpp"
#include "dac/error.hpp"
#include "dac/parallel.hpp"

namespace dac {

namespace {

constexpr std::uint32_t kBootstrapVersion = 1;
// Cells simulated and predicted together; fixed so results ignore worker count.
constexpr std::size_t kCellChunk = 128;

std::string cell_context(std::size_t k, std::size_t b) {
  return "bootstrap cell (block " + std::to_string(k + 1) + ", replicate " + std::to_string(b + 1) + ")";
}

void check_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericalError("bootstrap matrix contains a non-finite value");
}

}  // namespace

BlockEstimates block_estimates(const TrainedNetwork& net, const Field& field,
                               const BlockPartition& partition, std::size_t workers) {
  if (!(field.domain() == partition.parent()))
    throw InvalidArgument("field domain does not match the partition's parent grid");
  if (partition.block_nx() != net.input_nx() || partition.block_ny() != net.input_ny())
    throw InvalidArgument("block size " + std::to_string(partition.block_nx()) + "x" +
                          std::to_string(partition.block_ny()) + " does not match network input " +
                          std::to_string(net.input_nx()) + "x" + std::to_string(net.input_ny()));
  const std::size_t k_count = partition.block_count();
  std::vector<Field> blocks;
  blocks.reserve(k_count);
  for (std::size_t k = 0; k < k_count; ++k) blocks.push_back(extract_block(field, partition, k));

  BlockEstimates out;
  out.estimates.resize(k_count);
  const std::size_t chunks = (k_count + kCellChunk - 1) / kCellChunk;
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t k0 = c * kCellChunk;
    const std::size_t m = std::min(kCellChunk, k_count - k0);
    const auto pred = predict_batch(net, std::span<const Field>(blocks.data() + k0, m));
    std::copy(pred.begin(), pred.end(), out.estimates.begin() + static_cast<std::ptrdiff_t>(k0));
  });
  return out;
}

ParamVector mean_estimator(const BlockEstimates& est) {
  if (est.estimates.empty()) throw InvalidArgument("mean of zero block estimates");
  ParamVector m;
  m.model = est.estimates.front().model;
  for (const ParamVector& e : est.estimates)
    for (std::size_t i = 0; i < kParamDim; ++i) m[i] += e[i];
  for (std::size_t i = 0; i < kParamDim; ++i) m[i] /= static_cast<double>(est.estimates.size());
  return m;
}

BootstrapMatrix::BootstrapMatrix(std::size_t replicates, std::size_t blocks, ParamVector center)
    : BootstrapMatrix(replicates, blocks, center,
                      std::vector<double>(replicates * blocks * kParamDim, 0.0)) {}

BootstrapMatrix::BootstrapMatrix(std::size_t replicates, std::size_t blocks, ParamVector center,
                                 std::vector<double> values)
    : b_(replicates), k_(blocks), center_(center), values_(std::move(values)) {
  if (b_ < 2) throw InvalidArgument("bootstrap needs at least 2 replicates");
  if (k_ == 0) throw InvalidArgument("bootstrap needs at least one block");
  if (values_.size() != b_ * k_ * kParamDim)
    throw InvalidArgument("bootstrap payload has " + std::to_string(values_.size()) +
                          " values, expected " + std::to_string(b_ * k_ * kParamDim));
}

std::vector<double> BootstrapMatrix::column(std::size_t k, std::size_t i) const {
  if (k >= k_ || i >= kParamDim) throw InvalidArgument("bootstrap column out of range");
  std::vector<double> out(b_);
  for (std::size_t b = 0; b < b_; ++b) out[b] = at(b, k, i);
  return out;
}

std::size_t bootstrap_floor(std::size_t blocks) noexcept {
  return std::max<std::size_t>(2, blocks * kParamDim + 1);
}

BootstrapMatrix parametric_bootstrap(ModelTag model, const ParamVector& center,
                                     const BlockPartition& partition, const TrainedNetwork& net,
                                     std::size_t replicates, const Stream& stream,
                                     std::size_t workers) {
  const std::size_t k_count = partition.block_count();
  if (replicates < bootstrap_floor(k_count))
    throw InvalidArgument("B = " + std::to_string(replicates) + " is below the floor " +
                          std::to_string(bootstrap_floor(k_count)) + " for K = " +
                          std::to_string(k_count) + " blocks");
  if (partition.block_nx() != net.input_nx() || partition.block_ny() != net.input_ny())
    throw InvalidArgument("block size does not match the network input");
  if (net.model() != model) throw InvalidArgument("network was trained for a different model");

  // Every block shares the same lattice, so one factorization serves all cells.
  const GridDomain block = partition.block_domain();
  std::optional<FieldSampler> sampler;
  try {
    sampler.emplace(make_sampler_with_retry(model, block, center));
  } catch (const NumericalError& e) {
    throw NumericalError(cell_context(0, 0) + ": " + e.what());
  }

  BootstrapMatrix out(replicates, k_count, center);
  const std::size_t cells = replicates * k_count;
  const std::size_t chunks = (cells + kCellChunk - 1) / kCellChunk;
  const std::size_t d = block.size();
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t c0 = c * kCellChunk;
    const std::size_t m = std::min(kCellChunk, cells - c0);
    nn::Mat inputs(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t b = (c0 + j) / k_count, k = (c0 + j) % k_count;
      try {
        Stream s = stream.child(k, b);
        const Field f = sampler->draw(s);
        for (std::size_t i = 0; i < d; ++i)
          inputs(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
              transform_value(net.transform, f[i]);
      } catch (const std::exception& e) {
        throw NumericalError(cell_context(k, b) + ": " + e.what());
      }
    }
    const auto pred = predict_inputs(net, inputs);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t i = 0; i < kParamDim; ++i)
        out.at((c0 + j) / k_count, (c0 + j) % k_count, i) = pred[j][i];
  });
  check_finite(out.values());
  return out;
}

SingleDomainResult single_domain_bootstrap(const TrainedNetwork& net, const Field& field,
                                           std::size_t replicates, const Stream& stream,
                                           std::size_t workers) {
  const BlockPartition whole = partition(field.domain(), field.domain().nx(), field.domain().ny());
  const ParamVector estimate = predict(net, field);
  return {estimate, parametric_bootstrap(net.model(), estimate, whole, net, replicates, stream, workers)};
}

std::array<double, kParamDim> bootstrap_se(const BootstrapMatrix& m, std::size_t k) {
  std::array<double, kParamDim> se{};
  for (std::size_t i = 0; i < kParamDim; ++i) se[i] = sample_sd(m.column(k, i));
  return se;
}

std::array<Interval, kParamDim> bootstrap_percentile_ci(const BootstrapMatrix& m, std::size_t k,
                                                        double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  std::array<Interval, kParamDim> ci{};
  for (std::size_t i = 0; i < kParamDim; ++i) {
    const auto col = m.column(k, i);
    ci[i] = {quantile_linear(col, alpha / 2.0), quantile_linear(col, 1.0 - alpha / 2.0)};
  }
  return ci;
}

std::array<Interval, kParamDim> bootstrap_normal_ci(const BootstrapMatrix& m, std::size_t k,
                                                    const ParamVector& estimate, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const auto se = bootstrap_se(m, k);
  std::array<Interval, kParamDim> ci{};
  for (std::size_t i = 0; i < kParamDim; ++i) ci[i] = {estimate[i] - z * se[i], estimate[i] + z * se[i]};
  return ci;
}

void write_bootstrap(const BootstrapMatrix& m, const std::filesystem::path& path) {
  io::Writer w(path);
  w.magic("DACR");
  w.u32(kBootstrapVersion);
  w.u32(static_cast<std::uint32_t>(m.replicates()));
  w.u32(static_cast<std::uint32_t>(m.blocks()));
  w.u32(static_cast<std::uint32_t>(kParamDim));
  for (double v : m.center().values) w.f64(v);
  for (double v : m.values()) w.f64(v);
  w.close();
}

BootstrapMatrix read_bootstrap(const std::filesystem::path& path, ModelTag model) {
  io::Reader r(path);
  r.expect_magic("DACR");
  if (r.u32() != kBootstrapVersion) throw IoError(path.string() + ": unsupported DACR version");
  const std::uint32_t b = r.u32(), k = r.u32(), q = r.u32();
  if (q != kParamDim) throw IoError(path.string() + ": parameter dimension " + std::to_string(q));
  if (b < 2 || k == 0) throw IoError(path.string() + ": invalid B or K");
  ParamVector center;
  center.model = model;
  for (double& v : center.values) v = r.f64();
  std::vector<double> values(static_cast<std::size_t>(b) * k * q);
  for (double& v : values) v = r.f64();
  r.expect_end();
  check_finite(values);
  return BootstrapMatrix(b, k, center, std::move(values));
}

void write_block_estimates(const BlockEstimates& est, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "block,theta1,theta2\n" << std::setprecision(17);
  for (std::size_t k = 0; k < est.estimates.size(); ++k)
    out << k + 1 << ',' << est.estimates[k][0] << ',' << est.estimates[k][1] << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

BlockEstimates read_block_estimates(const std::filesystem::path& path, ModelTag model) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty file");
  BlockEstimates est;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> cols;
    try {
      while (std::getline(ss, cell, ',')) cols.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw IoError(path.string() + ": row " + std::to_string(row) + " is not numeric");
    }
    if (cols.size() != 1 + kParamDim)
      throw IoError(path.string() + ": row " + std::to_string(row) + " needs 3 columns");
    if (cols[0] != static_cast<double>(est.estimates.size() + 1))
      throw IoError(path.string() + ": row " + std::to_string(row) + " is out of block order");
    ParamVector p;
    p.model = model;
    for (std::size_t i = 0; i < kParamDim; ++i) p[i] = cols[1 + i];
    est.estimates.push_back(p);
  }
  if (est.estimates.empty()) throw IoError(path.string() + ": no block estimates");
  return est;
}

}  // namespace dac
