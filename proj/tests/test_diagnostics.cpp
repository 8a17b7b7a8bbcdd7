#include <gtest/gtest.h>

#include "support.hpp"

using namespace swrec;

namespace {

Eigen::MatrixXd random_dense(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd a(r, c);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.uniform(-1.0, 1.0);
  return a;
}

double svd_sigma1(const Eigen::MatrixXd& a) { return Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues()(0); }

}  // namespace

TEST(SpectralNorm, Diagonal) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(3, 3);
  d.diagonal() << 3, 1, 0.5;
  EXPECT_NEAR(spectral_norm(d).value, 3.0, 1e-6);
  // The same matrix through the sparse pattern route.
  const auto p = BipartitePattern::from_rows(3, {{0}, {1}, {2}});
  const std::vector<double> w = {3, 1, 0.5};
  const auto r = spectral_norm<double>(p, w);
  EXPECT_NEAR(r.value, 3.0, 1e-6);
  EXPECT_TRUE(r.converged);
}

TEST(SpectralNorm, DenseAsSparseMatchesSvd) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Eigen::MatrixXd a = random_dense(15, 10, s);
    std::vector<std::vector<index_t>> rows(15);
    std::vector<double> w;
    for (Eigen::Index i = 0; i < 15; ++i)
      for (Eigen::Index j = 0; j < 10; ++j) {
        rows[static_cast<std::size_t>(i)].push_back(static_cast<index_t>(j));
        w.push_back(a(i, j));
      }
    const auto p = BipartitePattern::from_rows(10, rows);
    PowerIterationConfig cfg;
    cfg.tol = 1e-12;
    cfg.max_iters = 20000;
    EXPECT_NEAR(spectral_norm<double>(p, w, cfg).value, svd_sigma1(a), 1e-6 * svd_sigma1(a));
    EXPECT_NEAR(spectral_norm<double>(p, w).value, svd_sigma1(a), 1e-3 * svd_sigma1(a));
  }
}

TEST(SpectralNorm, RankOneProduct) {
  Eigen::VectorXd a(4), b(6);
  a << 1, -2, 0.5, 3;
  b << 0.2, 1, -1, 2, 0, 0.7;
  EXPECT_NEAR(spectral_norm(a * b.transpose()).value, a.norm() * b.norm(), 1e-9);
}

TEST(SpectralNorm, ZeroMatrixAndNonFinite) {
  EXPECT_EQ(spectral_norm(Eigen::MatrixXd::Zero(3, 4)).value, 0.0);
  const auto p = BipartitePattern::from_rows(2, {{0}, {1}});
  const std::vector<double> w = {1.0, std::numeric_limits<double>::infinity()};
  EXPECT_THROW(spectral_norm<double>(p, w), Error);
}

TEST(StableRank, EqualSpectrumAndRankOne) {
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(6, 4);
  for (int k = 0; k < 4; ++k) q(k, k) = 2.0;
  EXPECT_NEAR(stable_rank(q), 4.0, 1e-9);
  Eigen::VectorXd a = Eigen::VectorXd::LinSpaced(5, 1, 5);
  EXPECT_NEAR(stable_rank(a * a.transpose()), 1.0, 1e-9);
  EXPECT_THROW(stable_rank(Eigen::MatrixXd::Zero(2, 2)), Error);
}

TEST(StableRank, BetweenOneAndRankAndScaleInvariant) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Eigen::MatrixXd a = random_dense(12, 7, 40 + s);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const double oracle = a.squaredNorm() / (svd.singularValues()(0) * svd.singularValues()(0));
    PowerIterationConfig cfg;
    cfg.tol = 1e-12;
    cfg.max_iters = 20000;
    const double sr = stable_rank(a, cfg);
    EXPECT_NEAR(sr, oracle, 1e-6 * oracle);
    EXPECT_GE(sr, 1.0 - 1e-12);
    EXPECT_LE(sr, 7.0 + 1e-12);
    EXPECT_LT(std::abs(stable_rank(Eigen::MatrixXd(10.0 * a), cfg) - sr) / sr, 1e-10);
    // Norm sandwich: spectral <= Frobenius <= sqrt(rank) * spectral.
    const double s1 = spectral_norm(a, cfg).value;
    EXPECT_LE(s1, a.norm() + 1e-12);
    EXPECT_LE(a.norm(), std::sqrt(7.0) * s1 + 1e-12);
  }
}

TEST(Bound, ArithmeticAndHomogeneity) {
  MatrixNorms l;
  l.spectral_norm = 2.0;
  l.stable_rank = 3.0;
  const std::vector<MatrixNorms> one = {l};
  EXPECT_NEAR(generalization_bound(one, 12), 1.0, 1e-12);

  const Eigen::MatrixXd a = random_dense(8, 5, 1), b = random_dense(5, 8, 2);
  PowerIterationConfig cfg;
  cfg.tol = 1e-13;
  cfg.max_iters = 50000;
  const double base = generalization_bound({a, b}, 100, cfg);
  EXPECT_NEAR(generalization_bound({Eigen::MatrixXd(3.5 * a), b}, 100, cfg), 3.5 * base, 1e-9 * base);
  // Direct formula from full SVDs.
  const double sa = svd_sigma1(a), sb = svd_sigma1(b);
  const double direct =
      std::sqrt(sa * sa * sb * sb * (a.squaredNorm() / (sa * sa) + b.squaredNorm() / (sb * sb)) / 100.0);
  EXPECT_NEAR(base, direct, 1e-9 * direct);
  EXPECT_THROW(generalization_bound(std::vector<MatrixNorms>{}, 1), Error);
}

TEST(Bound, LogSpaceAvoidsOverflow) {
  std::vector<MatrixNorms> layers(4);
  for (auto& l : layers) {
    l.spectral_norm = 1e60;
    l.stable_rank = 1.0;
  }
  // The product of squared norms (1e480) overflows; the bound itself does not.
  const double b = generalization_bound(layers, 4);
  EXPECT_TRUE(std::isfinite(b));
  EXPECT_NEAR(std::log10(b), 240.0, 1e-9);
}

TEST(Diagnose, CoversEveryMatrixAndMatchesDenseView) {
  auto model = init_model<double>(swtest::random_mask(25, 6, 2, 3), 4);
  const auto rep = diagnose(model, 50);
  ASSERT_EQ(rep.layers.size(), 2u);
  EXPECT_EQ(rep.layers[0].name, "encoder1");
  EXPECT_EQ(rep.layers[1].name, "decoder1");
  EXPECT_EQ(rep.layers[0].rows, 6u);
  EXPECT_EQ(rep.layers[0].cols, 25u);
  const auto& L = model.layers[0];
  const double s1 = svd_sigma1(densify(*L.encoder, L.W));
  EXPECT_NEAR(rep.layers[0].spectral_norm, s1, 1e-3 * s1);
  std::vector<Eigen::MatrixXd> dense = {densify(*L.encoder, L.W), densify(*L.decoder, L.W_prime)};
  EXPECT_NEAR(rep.bound, generalization_bound(dense, 50), 1e-3 * rep.bound);
  const auto j = rep.to_json();
  EXPECT_EQ(j["layers"].size(), 2u);
  EXPECT_EQ(j["n"], 50);
}
