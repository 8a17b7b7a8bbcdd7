#include <gtest/gtest.h>

#include "support.hpp"

using namespace swrec;
using swtest::random_clusters;

namespace {

/// Three overlapping clusters over nine items (1-based in the picture,
/// 0-based here): {1..7}, {4..9}, {1, 2, 8, 9}.
ConnectivityMask three_cluster_picture() {
  std::vector<std::vector<index_t>> rows(9);
  for (index_t i = 0; i < 7; ++i) rows[i].push_back(0);
  for (index_t i = 3; i < 9; ++i) rows[i].push_back(1);
  for (index_t i : {0, 1, 7, 8}) rows[i].push_back(2);
  ConnectivityMask m;
  m.pattern = BipartitePattern::from_rows(3, rows);
  return m;
}

}  // namespace

TEST(Pattern, ConstructionAndViews) {
  const auto p = BipartitePattern::from_rows(4, {{2, 0}, {}, {3, 1, 0}});
  EXPECT_EQ(p.rows(), 3u);
  EXPECT_EQ(p.cols(), 4u);
  EXPECT_EQ(p.nnz(), 5u);
  EXPECT_EQ(std::vector<index_t>(p.row(0).begin(), p.row(0).end()), (std::vector<index_t>{0, 2}));
  EXPECT_EQ(p.col_degree(0), 2u);
  EXPECT_EQ(p.col_degree(2), 1u);
  EXPECT_TRUE(p.contains(2, 3));
  EXPECT_FALSE(p.contains(1, 0));
  EXPECT_EQ(p.position(2, 1), 3u);
  // Column view positions point back into the row-major storage.
  for (std::size_t c = 0; c < p.cols(); ++c)
    for (auto q = p.col_ptr()[c]; q < p.col_ptr()[c + 1]; ++q) EXPECT_EQ(p.col()[p.col_pos()[q]], c);
  const auto t = p.transposed();
  EXPECT_EQ(t.rows(), 4u);
  EXPECT_TRUE(t.contains(3, 2));
  EXPECT_EQ(t.transposed(), p);
}

TEST(Pattern, RejectsBadEntries) {
  EXPECT_THROW(BipartitePattern::from_rows(3, {{0, 3}}), Error);
  EXPECT_THROW(BipartitePattern::from_rows(3, {{1, 1}}), Error);
}

TEST(Mask, PictureNeuronSupports) {
  const auto m = three_cluster_picture();
  EXPECT_EQ(m.neuron_degree(0), 7u);
  EXPECT_EQ(m.neuron_degree(2), 4u);
  std::vector<index_t> n3;
  for (std::size_t i = 0; i < 9; ++i)
    if (m.pattern.contains(i, 2)) n3.push_back(static_cast<index_t>(i));
  EXPECT_EQ(n3, (std::vector<index_t>{0, 1, 7, 8}));
}

TEST(Mask, SaturationIsFullyConnected) {
  const auto m = build_mask(saturated_clusters(6, 4), 6);
  EXPECT_EQ(m.pattern, BipartitePattern::full(6, 4));
  EXPECT_EQ(m.density(), 1.0);
}

TEST(Mask, DensityAndDegreesExact) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto c = random_clusters(20, 8, 2, s);
    const auto m = build_mask(c, 20);
    EXPECT_EQ(m.density(), 0.25);
    std::size_t bits = 0;
    for (std::size_t i = 0; i < 20; ++i) {
      EXPECT_EQ(m.pattern.row_degree(i), 2u);
      for (std::size_t k = 0; k < 8; ++k) bits += m.pattern.contains(i, k) ? 1 : 0;
    }
    EXPECT_EQ(bits, 40u);
  }
}

TEST(Mask, RoundTripsClusters) {
  const auto c = random_clusters(33, 10, 3, 4);
  const auto back = build_mask(c, 33).to_clusters();
  EXPECT_EQ(back.m, c.m);
  EXPECT_EQ(back.K, c.K);
  EXPECT_EQ(back.R, c.R);
  EXPECT_EQ(back.members, c.members);
  EXPECT_EQ(back.empty_clusters, c.empty_clusters);
}

TEST(Mask, OutOfRangeClusterIdIsIntegrityError) {
  auto c = random_clusters(5, 4, 2, 1);
  c.members[3] = 9;
  try {
    build_mask(c, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::integrity);
  }
  EXPECT_THROW(build_mask(random_clusters(5, 4, 2, 1), 6), Error);
}

TEST(Counting, DenseAndDegenerateCounts) {
  const auto dense = count_parameters(build_mask(saturated_clusters(5, 3), 5));
  EXPECT_EQ(dense.parameters, 38u);
  EXPECT_EQ(dense.weights, 30u);
  EXPECT_EQ(dense.flops_per_example, 60u);
  EXPECT_EQ(count_parameters(7, 4, 0).parameters, 11u);
}

TEST(Counting, TableScaleConvention) {
  // Weights only, 2 m R: the large-scale sparse configuration at 10% sparsity.
  const auto c = count_parameters(20108, 3000, 300);
  EXPECT_EQ(c.weights, 2ull * 20108 * 300);
  EXPECT_NEAR(static_cast<double>(c.weights) / 1e6, 12.065, 1e-3);
  EXPECT_EQ(c.parameters, c.weights + 3000 + 20108);
  // A width-15000 model at 10% sparsity on the same items: 60.324M weights.
  EXPECT_NEAR(static_cast<double>(count_parameters(20108, 15000, 1500).weights) / 1e6, 60.324, 1e-3);
}

TEST(Counting, DegreeHistogram) {
  const auto h = neuron_degree_histogram(three_cluster_picture().pattern);
  EXPECT_EQ(h.at(7), 1u);
  EXPECT_EQ(h.at(6), 1u);
  EXPECT_EQ(h.at(4), 1u);
}
