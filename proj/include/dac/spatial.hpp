#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace dac {

/*!
 * Regular nx-by-ny lattice. Location j = iy * nx + ix (row-major, rows along
 * y) sits at (1 + ix * spacing, 1 + iy * spacing).
 */
class GridDomain {
 public:
  GridDomain(std::size_t nx, std::size_t ny, double spacing);

  [[nodiscard]] std::size_t nx() const noexcept { return nx_; }
  [[nodiscard]] std::size_t ny() const noexcept { return ny_; }
  [[nodiscard]] double spacing() const noexcept { return spacing_; }
  [[nodiscard]] std::size_t size() const noexcept { return nx_ * ny_; }

  [[nodiscard]] std::pair<double, double> location(std::size_t j) const;
  [[nodiscard]] double distance(std::size_t i, std::size_t j) const;

  friend bool operator==(const GridDomain&, const GridDomain&) = default;

 private:
  std::size_t nx_;
  std::size_t ny_;
  double spacing_;
};

/// Validating factory; throws InvalidArgument on nonpositive inputs.
[[nodiscard]] GridDomain make_grid(std::size_t nx, std::size_t ny, double spacing = 1.0);

/// Symmetric d x d Euclidean distance matrix with zero diagonal.
[[nodiscard]] Eigen::MatrixXd pairwise_distances(const GridDomain& domain);

/// Real-valued observation on a grid, row-major.
class Field {
 public:
  Field(GridDomain domain, std::vector<double> values);

  [[nodiscard]] const GridDomain& domain() const noexcept { return domain_; }
  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
  [[nodiscard]] double operator[](std::size_t j) const { return values_[j]; }
  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }

  friend bool operator==(const Field&, const Field&) = default;

 private:
  GridDomain domain_;
  std::vector<double> values_;
};

/// Exact tiling of a parent grid into K = (nx/block_nx) * (ny/block_ny) blocks.
/// Blocks are numbered row-major by tile position, starting at 0.
class BlockPartition {
 public:
  [[nodiscard]] const GridDomain& parent() const noexcept { return parent_; }
  [[nodiscard]] std::size_t block_nx() const noexcept { return block_nx_; }
  [[nodiscard]] std::size_t block_ny() const noexcept { return block_ny_; }
  [[nodiscard]] std::size_t block_count() const noexcept { return index_map_.size(); }
  [[nodiscard]] std::size_t block_size() const noexcept { return block_nx_ * block_ny_; }

  /// Parent indices of block k in row-major order within the block.
  [[nodiscard]] std::span<const std::size_t> indices(std::size_t k) const;

  /// The grid every block lives on (same spacing as the parent).
  [[nodiscard]] GridDomain block_domain() const;

  friend BlockPartition partition(const GridDomain&, std::size_t, std::size_t);

 private:
  BlockPartition(GridDomain parent, std::size_t block_nx, std::size_t block_ny)
      : parent_(parent), block_nx_(block_nx), block_ny_(block_ny) {}

  GridDomain parent_;
  std::size_t block_nx_;
  std::size_t block_ny_;
  std::vector<std::vector<std::size_t>> index_map_;
};

/// Throws InvalidArgument naming the axis when block dims do not divide the grid.
[[nodiscard]] BlockPartition partition(const GridDomain& domain, std::size_t block_nx,
                                       std::size_t block_ny);

[[nodiscard]] Field extract_block(const Field& field, const BlockPartition& partition,
                                  std::size_t k);

/// Inverse of extracting every block: writes block values back to parent positions.
[[nodiscard]] Field scatter_blocks(const std::vector<Field>& blocks,
                                   const BlockPartition& partition);

}  // namespace dac
