#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "support.hpp"

using namespace swrec;

namespace {

Eigen::MatrixXd random_points(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd p(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.uniform(-1.0, 1.0);
  return p;
}

/// Plain Lloyd from K distinct random points, no k-means++ and no reseeding.
double lloyd_inertia(const Eigen::MatrixXd& p, std::size_t K, std::mt19937_64& gen) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(p.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), gen);
  Eigen::MatrixXd c(static_cast<Eigen::Index>(K), p.cols());
  for (std::size_t k = 0; k < K; ++k) c.row(static_cast<Eigen::Index>(k)) = p.row(idx[k]);
  std::vector<Eigen::Index> lab(static_cast<std::size_t>(p.rows()), -1);
  for (int it = 0; it < 200; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      Eigen::Index best = 0;
      (c.rowwise() - p.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (best != lab[static_cast<std::size_t>(i)]) changed = true;
      lab[static_cast<std::size_t>(i)] = best;
    }
    if (!changed) break;
    for (std::size_t k = 0; k < K; ++k) {
      Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(p.cols());
      int cnt = 0;
      for (Eigen::Index i = 0; i < p.rows(); ++i)
        if (lab[static_cast<std::size_t>(i)] == static_cast<Eigen::Index>(k)) {
          s += p.row(i);
          ++cnt;
        }
      if (cnt) c.row(static_cast<Eigen::Index>(k)) = s / cnt;
    }
  }
  double in = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) in += (p.row(i) - c.row(lab[static_cast<std::size_t>(i)])).squaredNorm();
  return in;
}

std::vector<index_t> hard_labels(const OverlappingClusters& c) {
  std::vector<index_t> out(c.m);
  for (std::size_t i = 0; i < c.m; ++i) out[i] = c.of(i)[0];
  return out;
}

}  // namespace

TEST(Normalize, RowSumAndL2) {
  Eigen::MatrixXd p(3, 3);
  p << 0.2, 0.3, 0.5, 2, 2, 0, 0, 0, 0;
  const auto rs = normalize_rows(p, RowNormalization::row_sum);
  EXPECT_NEAR(rs(0, 0), 0.2, 1e-15);
  EXPECT_NEAR(rs(0, 2), 0.5, 1e-15);
  const auto l2 = normalize_rows(p, RowNormalization::l2);
  EXPECT_NEAR(l2(1, 0), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(l2(1, 1), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_EQ(rs.row(2).cwiseAbs().sum(), 0.0);
  EXPECT_EQ(l2.row(2).cwiseAbs().sum(), 0.0);
  EXPECT_EQ(parse_row_normalization("row_sum"), RowNormalization::row_sum);
  EXPECT_THROW(parse_row_normalization("max"), Error);
}

TEST(KMeans, SeparatedCloudsAreSplit) {
  Rng rng(1);
  Eigen::MatrixXd p(40, 2);
  for (Eigen::Index i = 0; i < 40; ++i) {
    const double cx = i < 20 ? -10.0 : 10.0;
    p(i, 0) = cx + rng.uniform(-0.5, 0.5);
    p(i, 1) = rng.uniform(-0.5, 0.5);
  }
  const auto r = kmeans(p, 2, 100, 3);
  for (Eigen::Index i = 1; i < 20; ++i) EXPECT_EQ(r.labels[static_cast<std::size_t>(i)], r.labels[0]);
  for (Eigen::Index i = 21; i < 40; ++i) EXPECT_EQ(r.labels[static_cast<std::size_t>(i)], r.labels[20]);
  EXPECT_NE(r.labels[0], r.labels[20]);
  double within = 0.0;
  for (int half = 0; half < 2; ++half) {
    const Eigen::MatrixXd blk = p.middleRows(20 * half, 20);
    const Eigen::RowVectorXd mu = blk.colwise().mean();
    within += (blk.rowwise() - mu).rowwise().squaredNorm().sum();
  }
  EXPECT_NEAR(r.inertia, within, 1e-9);
}

TEST(KMeans, OnePointPerClusterHasZeroInertia) {
  const auto p = random_points(7, 3, 2);
  EXPECT_EQ(kmeans(p, 7, 100, 1).inertia, 0.0);
}

TEST(KMeans, InertiaNonIncreasing) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto r = kmeans(random_points(200, 4, s), 12, 100, s);
    for (std::size_t k = 1; k < r.inertia_history.size(); ++k)
      EXPECT_LE(r.inertia_history[k], r.inertia_history[k - 1] + 1e-12);
    EXPECT_LE(r.inertia, r.inertia_history.back() + 1e-12);
  }
}

TEST(KMeans, CompetitiveWithRandomRestartLloyd) {
  // Statistical check: in at least 90% of seeds, k-means is no worse than the
  // best of 20 random-restart Lloyd runs.
  int wins = 0;
  const int trials = 40;
  for (int s = 0; s < trials; ++s) {
    const auto p = random_points(50, 2, 1000 + static_cast<std::uint64_t>(s));
    std::mt19937_64 gen(static_cast<std::uint64_t>(s));
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < 20; ++r) best = std::min(best, lloyd_inertia(p, 3, gen));
    if (kmeans(p, 3, 100, static_cast<std::uint64_t>(s)).inertia <= best * (1.0 + 1e-12)) ++wins;
  }
  EXPECT_GE(wins, static_cast<int>(0.9 * trials));
}

TEST(KMeans, DuplicatePointsDoNotBreakSeeding) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(6, 2);
  p(5, 0) = 1.0;
  const auto r = kmeans(p, 4, 50, 1);
  EXPECT_EQ(r.centroids.rows(), 4);
  EXPECT_NEAR(r.inertia, 0.0, 1e-15);
}

TEST(KMeans, RestartsNeverHurt) {
  const auto p = random_points(80, 3, 12);
  const double one = kmeans(p, 6, 100, 3, 1).inertia;
  EXPECT_LE(kmeans(p, 6, 100, 3, 5).inertia, one);
  EXPECT_THROW(kmeans(p, 6, 100, 3, 0), Error);
  EXPECT_THROW(kmeans(p, 81, 100, 3), Error);
}

TEST(KMeans, DeterministicPerSeed) {
  const auto p = random_points(100, 3, 8);
  const auto a = kmeans(p, 5, 100, 4), b = kmeans(p, 5, 100, 4);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.centroids, b.centroids);
}

TEST(Overlap, SaturationAndHardLabels) {
  const auto p = random_points(30, 3, 5);
  const auto km = kmeans(p, 4, 100, 2);
  const auto full = assign_overlapping(p, km.centroids, 4);
  for (std::size_t i = 0; i < 30; ++i) {
    const auto a = full.of(i);
    EXPECT_EQ(std::vector<index_t>(a.begin(), a.end()), (std::vector<index_t>{0, 1, 2, 3}));
  }
  const auto one = assign_overlapping(p, km.centroids, 1);
  EXPECT_EQ(hard_labels(one), km.labels);
}

TEST(Overlap, MatchesExhaustiveSortOracle) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto p = random_points(10, 2, 50 + s);
    const auto c = random_points(4, 2, 90 + s);
    const auto got = assign_overlapping(p, c, 2);
    EXPECT_EQ(got.members.size(), 10u * 2u);
    for (Eigen::Index i = 0; i < 10; ++i) {
      std::vector<std::pair<double, index_t>> d;
      for (Eigen::Index k = 0; k < 4; ++k) d.push_back({(p.row(i) - c.row(k)).squaredNorm(), static_cast<index_t>(k)});
      std::sort(d.begin(), d.end());
      std::vector<index_t> expect = {d[0].second, d[1].second};
      std::sort(expect.begin(), expect.end());
      const auto a = got.of(static_cast<std::size_t>(i));
      EXPECT_EQ(std::vector<index_t>(a.begin(), a.end()), expect);
    }
  }
}

TEST(Overlap, PermutationEquivariant) {
  const auto p = random_points(40, 3, 6);
  const auto c = random_points(6, 3, 7);
  std::vector<Eigen::Index> perm = {3, 0, 5, 1, 4, 2};  // new row k holds old centroid perm[k]
  Eigen::MatrixXd cp(6, 3);
  for (Eigen::Index k = 0; k < 6; ++k) cp.row(k) = c.row(perm[static_cast<std::size_t>(k)]);
  const auto a = assign_overlapping(p, c, 3);
  const auto b = assign_overlapping(p, cp, 3);
  for (std::size_t i = 0; i < 40; ++i) {
    std::vector<index_t> mapped;
    for (index_t k : b.of(i)) mapped.push_back(static_cast<index_t>(perm[k]));
    std::sort(mapped.begin(), mapped.end());
    const auto ai = a.of(i);
    EXPECT_EQ(mapped, std::vector<index_t>(ai.begin(), ai.end()));
  }
}

TEST(Overlap, TotalAssignmentsEqualMTimesR) {
  const auto p = random_points(57, 4, 9);
  const auto r = assign_overlapping(p, random_points(9, 4, 1), 3);
  const auto sizes = r.cluster_sizes();
  EXPECT_EQ(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}), 57u * 3u);
}

TEST(Overlap, ZeroRowsAssignedByDistanceFromOrigin) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(2, 2);
  p(1, 0) = 5.0;
  Eigen::MatrixXd c(3, 2);
  c << 0.1, 0.0, 5.0, 0.0, -0.2, 0.0;
  const auto r = assign_overlapping(p, c, 2);
  const auto a = r.of(0);
  EXPECT_EQ(std::vector<index_t>(a.begin(), a.end()), (std::vector<index_t>{0, 2}));
}

TEST(Grouping, PlantedBlocksRecoveredExactly) {
  PlantedSpec spec;
  spec.n_users = 2000;
  spec.m_items = 300;
  spec.n_blocks = 3;
  spec.within_block_p = 0.3;
  spec.cross_block_p = 0.0;
  const auto data = generate(spec);
  GroupingConfig g;
  g.K = 3;
  g.R = 1;
  g.F = 3;
  const auto res = item_grouping(data.matrix, g, SpectralAlgo::laplacian);
  EXPECT_DOUBLE_EQ(adjusted_rand_index(hard_labels(res.clusters), data.truth.item_block), 1.0);
}

TEST(Grouping, OverlapTwoContainsTheBlockCluster) {
  PlantedSpec spec;
  spec.within_block_p = 0.3;
  spec.cross_block_p = 0.01;
  const auto data = generate(spec);
  GroupingConfig g;
  g.K = 3;
  g.F = 10;
  g.R = 1;
  const auto hard = item_grouping(data.matrix, g, SpectralAlgo::laplacian);
  g.R = 2;
  const auto two = item_grouping(data.matrix, g, SpectralAlgo::laplacian);
  // Same seeds and centroids: the hard cluster is among the two nearest.
  for (std::size_t i = 0; i < data.matrix.m(); ++i) {
    const auto a = two.clusters.of(i);
    EXPECT_TRUE(std::find(a.begin(), a.end(), hard.clusters.of(i)[0]) != a.end());
  }
  // The hard clusters correspond to blocks.
  EXPECT_GE(adjusted_rand_index(hard_labels(hard.clusters), data.truth.item_block), 0.95);
}

TEST(Grouping, DefaultsAndEcho) {
  GroupingConfig g;
  EXPECT_EQ(g.F, 50u);
  EXPECT_EQ(g.K, 1000u);
  EXPECT_EQ(g.overlap(), 100u);
  EXPECT_EQ(g.kmeans_max_iters, 100u);
  const auto x = swtest::random_matrix(300, 60, 0.1, 2);
  GroupingConfig small;
  small.K = 20;
  small.F = 8;
  const auto res = item_grouping(x, small, SpectralAlgo::svd);
  EXPECT_EQ(res.config.R, 2u);
  EXPECT_EQ(res.config.F, 8u);
  EXPECT_EQ(res.algo, SpectralAlgo::svd);
  EXPECT_EQ(res.clusters.members.size(), 60u * 2u);
}

TEST(Grouping, InvalidOverlapRejected) {
  const auto x = swtest::random_matrix(50, 10, 0.3, 1);
  GroupingConfig g;
  g.K = 5;
  g.R = 5;
  g.F = 3;
  EXPECT_THROW(item_grouping(x, g, SpectralAlgo::laplacian), Error);
  g.K = 11;
  g.R = 1;
  EXPECT_THROW(item_grouping(x, g, SpectralAlgo::laplacian), Error);
}

TEST(Grouping, DenseFeatureRouteGroupsStructuredColumns) {
  // Two groups of columns driven by disjoint sets of rows.
  Rng rng(3);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(200, 12);
  for (Eigen::Index r = 0; r < 200; ++r)
    for (Eigen::Index c = 0; c < 12; ++c)
      if ((r < 100) == (c < 6)) h(r, c) = 0.5 + 0.5 * rng.uniform();
  GroupingConfig g;
  g.K = 2;
  g.R = 1;
  g.F = 2;
  const auto res = item_grouping(h, g, SpectralAlgo::laplacian);
  std::vector<index_t> truth(12);
  for (int c = 0; c < 12; ++c) truth[static_cast<std::size_t>(c)] = c < 6 ? 0 : 1;
  EXPECT_DOUBLE_EQ(adjusted_rand_index(hard_labels(res.clusters), truth), 1.0);
}

TEST(Ari, KnownValues) {
  std::vector<index_t> a = {0, 0, 1, 1}, b = {1, 1, 0, 0}, c = {0, 1, 0, 1};
  EXPECT_DOUBLE_EQ(adjusted_rand_index(a, b), 1.0);
  EXPECT_NEAR(adjusted_rand_index(a, c), -0.5, 1e-12);
}
