#include <gtest/gtest.h>

#include "support.hpp"

using namespace swrec;

namespace {

std::vector<index_t> hard_labels(const OverlappingClusters& c) {
  std::vector<index_t> out(c.m);
  for (std::size_t i = 0; i < c.m; ++i) out[i] = c.of(i)[0];
  return out;
}

}  // namespace

TEST(Synth, NoCrossConsumptionIsBlockDiagonal) {
  PlantedSpec s;
  s.n_users = 500;
  s.m_items = 90;
  s.cross_block_p = 0.0;
  const auto d = generate(s);
  for (std::size_t u = 0; u < d.matrix.n(); ++u)
    for (index_t i : d.matrix.row(u)) EXPECT_EQ(d.truth.item_block[i], d.truth.user_block[u]);
}

TEST(Synth, DeterministicPerSeed) {
  PlantedSpec s;
  s.n_users = 300;
  const auto a = generate(s), b = generate(s);
  EXPECT_TRUE(std::equal(a.matrix.col_idx().begin(), a.matrix.col_idx().end(), b.matrix.col_idx().begin(),
                         b.matrix.col_idx().end()));
  EXPECT_EQ(a.truth.user_block, b.truth.user_block);
  s.seed = 2;
  const auto c = generate(s);
  EXPECT_NE(a.truth.user_block, c.truth.user_block);
}

TEST(Synth, DensityWithinThreeStandardErrors) {
  for (double alpha : {0.0, 0.8}) {
    PlantedSpec s;
    s.n_users = 3000;
    s.m_items = 200;
    s.n_blocks = 4;
    s.within_block_p = 0.2;
    s.cross_block_p = 0.02;
    s.overlap_items_per_pair = 5;
    s.popularity_alpha = alpha;
    const auto d = generate(s);
    const double expected = planted_expected_density(s, d.truth);
    const double cells = static_cast<double>(s.n_users * s.m_items);
    const double observed = static_cast<double>(d.matrix.nnz()) / cells;
    const double se = std::sqrt(expected * (1 - expected) / cells);
    EXPECT_NEAR(observed, expected, 3 * se) << alpha;
  }
}

TEST(Synth, OverlapItemsBelongToTwoBlocks) {
  PlantedSpec s;
  s.m_items = 30;
  s.n_blocks = 3;
  s.overlap_items_per_pair = 2;
  const auto d = generate(s);
  std::size_t doubles = 0;
  for (const auto& m : d.truth.memberships) doubles += m.size() == 2;
  EXPECT_EQ(doubles, 4u);
  EXPECT_EQ(d.truth.memberships[9], (std::vector<index_t>{0, 1}));
  EXPECT_EQ(d.truth.memberships[19], (std::vector<index_t>{1, 2}));
}

TEST(Synth, InvalidSpecsAreConfigErrors) {
  PlantedSpec s;
  s.cross_block_p = 0.5;
  s.within_block_p = 0.3;
  EXPECT_THROW(generate(s), Error);
  PlantedSpec t;
  t.n_blocks = 400;
  EXPECT_THROW(generate(t), Error);
  PlantedSpec z;
  z.within_block_p = 0.0;
  z.cross_block_p = 0.0;
  try {
    generate(z);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
}

TEST(Synth, PlantedBlocksRecoveredByGrouping) {
  PlantedSpec s;  // 2000 x 300, 3 blocks, 0.3 / 0.01, seed 1
  const auto d = generate(s);
  GroupingConfig g;
  g.K = 3;
  g.R = 1;
  g.F = 3;
  const auto res = item_grouping(d.matrix, g, SpectralAlgo::laplacian);
  EXPECT_GE(adjusted_rand_index(hard_labels(res.clusters), d.truth.item_block), 0.95);
}

TEST(Synth, EqualProbabilitiesCarryNoSignal) {
  double total = 0.0;
  const int runs = 5;
  for (int r = 0; r < runs; ++r) {
    PlantedSpec s;
    s.n_users = 800;
    s.m_items = 90;
    s.within_block_p = 0.1;
    s.cross_block_p = 0.1;
    s.seed = 10 + static_cast<std::uint64_t>(r);
    const auto d = generate(s);
    GroupingConfig g;
    g.K = 3;
    g.R = 1;
    g.F = 3;
    total += adjusted_rand_index(hard_labels(item_grouping(d.matrix, g, SpectralAlgo::laplacian).clusters),
                                 d.truth.item_block);
  }
  EXPECT_LT(std::abs(total / runs), 0.05);
}
