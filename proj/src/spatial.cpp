#include "dac/spatial.hpp"

#include <cmath>
#include <string>

#include "dac/error.hpp"

namespace dac {

GridDomain::GridDomain(std::size_t nx, std::size_t ny, double spacing)
    : nx_(nx), ny_(ny), spacing_(spacing) {
  if (nx == 0 || ny == 0) throw InvalidArgument("grid dimensions must be positive");
  if (!(spacing > 0.0) || !std::isfinite(spacing))
    throw InvalidArgument("grid spacing must be positive and finite");
}

std::pair<double, double> GridDomain::location(std::size_t j) const {
  if (j >= size()) throw InvalidArgument("location index out of range");
  const auto ix = static_cast<double>(j % nx_);
  const auto iy = static_cast<double>(j / nx_);
  return {1.0 + ix * spacing_, 1.0 + iy * spacing_};
}

double GridDomain::distance(std::size_t i, std::size_t j) const {
  const auto [xi, yi] = location(i);
  const auto [xj, yj] = location(j);
  return std::hypot(xi - xj, yi - yj);
}

GridDomain make_grid(std::size_t nx, std::size_t ny, double spacing) {
  return GridDomain(nx, ny, spacing);
}

Eigen::MatrixXd pairwise_distances(const GridDomain& domain) {
  const auto d = static_cast<Eigen::Index>(domain.size());
  Eigen::MatrixXd dist(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    dist(j, j) = 0.0;
    for (Eigen::Index i = j + 1; i < d; ++i) {
      const double h = domain.distance(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      dist(i, j) = h;
      dist(j, i) = h;
    }
  }
  return dist;
}

Field::Field(GridDomain domain, std::vector<double> values)
    : domain_(domain), values_(std::move(values)) {
  if (values_.size() != domain_.size())
    throw InvalidArgument("field has " + std::to_string(values_.size()) +
                          " values but the domain has " + std::to_string(domain_.size()) +
                          " locations");
  for (double v : values_)
    if (!std::isfinite(v)) throw InvalidArgument("field values must be finite");
}

std::span<const std::size_t> BlockPartition::indices(std::size_t k) const {
  if (k >= index_map_.size())
    throw InvalidArgument("block index " + std::to_string(k) + " out of range (K = " +
                          std::to_string(index_map_.size()) + ")");
  return index_map_[k];
}

GridDomain BlockPartition::block_domain() const {
  return GridDomain(block_nx_, block_ny_, parent_.spacing());
}

BlockPartition partition(const GridDomain& domain, std::size_t block_nx, std::size_t block_ny) {
  if (block_nx == 0 || block_ny == 0) throw InvalidArgument("block dimensions must be positive");
  if (domain.nx() % block_nx != 0)
    throw InvalidArgument("block width " + std::to_string(block_nx) +
                          " does not divide grid x dimension " + std::to_string(domain.nx()));
  if (domain.ny() % block_ny != 0)
    throw InvalidArgument("block height " + std::to_string(block_ny) +
                          " does not divide grid y dimension " + std::to_string(domain.ny()));

  BlockPartition p(domain, block_nx, block_ny);
  const std::size_t tiles_x = domain.nx() / block_nx;
  const std::size_t tiles_y = domain.ny() / block_ny;
  p.index_map_.reserve(tiles_x * tiles_y);
  for (std::size_t ty = 0; ty < tiles_y; ++ty) {
    for (std::size_t tx = 0; tx < tiles_x; ++tx) {
      std::vector<std::size_t> idx;
      idx.reserve(block_nx * block_ny);
      for (std::size_t by = 0; by < block_ny; ++by)
        for (std::size_t bx = 0; bx < block_nx; ++bx)
          idx.push_back((ty * block_ny + by) * domain.nx() + tx * block_nx + bx);
      p.index_map_.push_back(std::move(idx));
    }
  }
  return p;
}

Field extract_block(const Field& field, const BlockPartition& partition, std::size_t k) {
  if (!(field.domain() == partition.parent()))
    throw InvalidArgument("field domain does not match the partition's parent grid");
  const auto idx = partition.indices(k);
  std::vector<double> values;
  values.reserve(idx.size());
  for (std::size_t j : idx) values.push_back(field[j]);
  return Field(partition.block_domain(), std::move(values));
}

Field scatter_blocks(const std::vector<Field>& blocks, const BlockPartition& partition) {
  if (blocks.size() != partition.block_count())
    throw InvalidArgument("expected one field per block");
  std::vector<double> values(partition.parent().size(), 0.0);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    if (!(blocks[k].domain() == partition.block_domain()))
      throw InvalidArgument("block field " + std::to_string(k) + " has the wrong shape");
    const auto idx = partition.indices(k);
    for (std::size_t i = 0; i < idx.size(); ++i) values[idx[i]] = blocks[k][i];
  }
  return Field(partition.parent(), std::move(values));
}

}  // namespace dac
