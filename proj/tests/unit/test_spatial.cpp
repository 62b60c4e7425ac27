#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dac/error.hpp"
#include "dac/field_io.hpp"
#include "dac/spatial.hpp"
#include "test_util.hpp"

using namespace dac;

TEST(Grid, TwentyByTwentyCorners) {
  const GridDomain d = make_grid(20, 20, 1.0);
  EXPECT_EQ(d.size(), 400u);
  EXPECT_EQ(d.location(0), std::make_pair(1.0, 1.0));
  EXPECT_EQ(d.location(399), std::make_pair(20.0, 20.0));
}

TEST(Grid, SingleSite) {
  const GridDomain d = make_grid(1, 1, 1.0);
  EXPECT_EQ(d.size(), 1u);
  EXPECT_EQ(d.location(0), std::make_pair(1.0, 1.0));
}

TEST(Grid, MaxDistanceThreeByTwo) {
  const auto dist = pairwise_distances(make_grid(3, 2, 0.5));
  EXPECT_EQ(dist.rows(), 6);
  EXPECT_NEAR(dist.maxCoeff(), std::hypot(1.0, 0.5), 1e-15);
}

TEST(Grid, RejectsNonpositive) {
  EXPECT_THROW((void)make_grid(0, 3, 1.0), InvalidArgument);
  EXPECT_THROW((void)make_grid(3, 0, 1.0), InvalidArgument);
  EXPECT_THROW((void)make_grid(3, 3, 0.0), InvalidArgument);
  EXPECT_THROW((void)make_grid(3, 3, -1.0), InvalidArgument);
}

TEST(Distances, SmallGrids) {
  const auto d21 = pairwise_distances(make_grid(2, 1));
  EXPECT_DOUBLE_EQ(d21(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(d21(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(d21(0, 0), 0.0);

  const auto d22 = pairwise_distances(make_grid(2, 2));
  EXPECT_DOUBLE_EQ(d22(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(d22(0, 2), 1.0);
  EXPECT_DOUBLE_EQ(d22(0, 3), std::sqrt(2.0));

  const auto d33 = pairwise_distances(make_grid(3, 3));
  EXPECT_DOUBLE_EQ(d33.maxCoeff(), 2.0 * std::sqrt(2.0));
  EXPECT_TRUE(d33.isApprox(d33.transpose()));
  EXPECT_EQ(d33.diagonal().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Partition, BlockCounts) {
  EXPECT_EQ(partition(make_grid(60, 60), 30, 30).block_count(), 4u);
  EXPECT_EQ(partition(make_grid(180, 180), 20, 20).block_count(), 81u);
  const BlockPartition whole = partition(make_grid(20, 20), 20, 20);
  ASSERT_EQ(whole.block_count(), 1u);
  const auto idx = whole.indices(0);
  for (std::size_t j = 0; j < 400; ++j) EXPECT_EQ(idx[j], j);
}

TEST(Partition, NonDivisibleNamesAxis) {
  try {
    (void)partition(make_grid(40, 40), 30, 20);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find('x'), std::string::npos);
  }
  try {
    (void)partition(make_grid(40, 40), 20, 30);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find('y'), std::string::npos);
  }
}

TEST(Partition, DisjointCover) {
  const BlockPartition p = partition(make_grid(12, 6), 4, 3);
  std::vector<std::size_t> all;
  for (std::size_t k = 0; k < p.block_count(); ++k) {
    EXPECT_EQ(p.indices(k).size(), 12u);
    all.insert(all.end(), p.indices(k).begin(), p.indices(k).end());
  }
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(72);
  std::iota(expect.begin(), expect.end(), 0);
  EXPECT_EQ(all, expect);
}

TEST(Partition, FirstBlockOfFourByFour) {
  const BlockPartition p = partition(make_grid(4, 4), 2, 2);
  const auto idx = p.indices(0);
  EXPECT_EQ(std::vector<std::size_t>(idx.begin(), idx.end()), (std::vector<std::size_t>{0, 1, 4, 5}));
  // second tile in the first row
  const auto idx1 = p.indices(1);
  EXPECT_EQ(std::vector<std::size_t>(idx1.begin(), idx1.end()), (std::vector<std::size_t>{2, 3, 6, 7}));
}

TEST(Partition, ExtractScatterRoundTrip) {
  const GridDomain d = make_grid(6, 4);
  std::vector<double> v(d.size());
  std::iota(v.begin(), v.end(), 0.5);
  const Field f(d, v);
  const BlockPartition p = partition(d, 3, 2);
  std::vector<Field> blocks;
  for (std::size_t k = 0; k < p.block_count(); ++k) blocks.push_back(extract_block(f, p, k));
  EXPECT_EQ(scatter_blocks(blocks, p), f);
  const BlockPartition one = partition(d, 6, 4);
  const Field whole = extract_block(f, one, 0);
  EXPECT_EQ(std::vector<double>(whole.values().begin(), whole.values().end()), v);
}

TEST(Partition, ExtractErrors) {
  const GridDomain d = make_grid(4, 4);
  const Field f(d, std::vector<double>(16, 1.0));
  const BlockPartition p = partition(d, 2, 2);
  EXPECT_THROW((void)extract_block(f, p, 4), InvalidArgument);
  const Field other(make_grid(2, 8), std::vector<double>(16, 1.0));
  EXPECT_THROW((void)extract_block(other, p, 0), InvalidArgument);
}

TEST(Partition, BlockDistancesMatchOwnGrid) {
  const GridDomain d = make_grid(6, 6, 0.5);
  const BlockPartition p = partition(d, 3, 3);
  const auto full = pairwise_distances(d);
  const auto own = pairwise_distances(p.block_domain());
  for (std::size_t k = 0; k < p.block_count(); ++k) {
    const auto idx = p.indices(k);
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = 0; b < idx.size(); ++b)
        EXPECT_NEAR(full(idx[a], idx[b]), own(a, b), 1e-14);
  }
}

TEST(FieldCheck, RejectsWrongLengthAndNonFinite) {
  EXPECT_THROW(Field(make_grid(2, 2), std::vector<double>(3, 0.0)), InvalidArgument);
  EXPECT_THROW(Field(make_grid(1, 1), std::vector<double>{NAN}), InvalidArgument);
}

TEST(FieldIo, RoundTripAndLayout) {
  TempDir tmp;
  const Field f(make_grid(3, 2, 0.25), {1.0, -2.0, 3.5, 0.0, 1e-300, 7.0});
  write_field(f, tmp / "f.dacf");
  EXPECT_EQ(read_field(tmp / "f.dacf"), f);
  EXPECT_EQ(std::filesystem::file_size(tmp / "f.dacf"), 4u + 4 + 4 + 4 + 8 + 6 * 8);
  std::ifstream in(tmp / "f.dacf", std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  EXPECT_EQ(std::string(magic, 4), "DACF");
}

TEST(FieldIo, RejectsBadMagicAndTruncation) {
  TempDir tmp;
  {
    std::ofstream out(tmp / "bad.dacf", std::ios::binary);
    out << "NOPE0000000000000000000000";
  }
  EXPECT_THROW((void)read_field(tmp / "bad.dacf"), IoError);
  const Field f(make_grid(2, 2), {1, 2, 3, 4});
  write_field(f, tmp / "t.dacf");
  std::filesystem::resize_file(tmp / "t.dacf", 30);
  EXPECT_THROW((void)read_field(tmp / "t.dacf"), IoError);
  EXPECT_THROW((void)read_field(tmp / "missing.dacf"), IoError);
}
