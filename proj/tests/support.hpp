#pragma once

// Shared helpers for the unit tests: random inputs and dense reference
// computations that do not reuse library code paths.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "swrec/swrec.hpp"

namespace swtest {

using swrec::index_t;

inline swrec::InteractionMatrix random_matrix(std::size_t n, std::size_t m, double density, std::uint64_t seed,
                                              bool nonempty_rows = true) {
  std::mt19937_64 gen(seed);
  std::bernoulli_distribution coin(density);
  std::uniform_int_distribution<std::size_t> pick(0, m - 1);
  std::vector<std::vector<index_t>> rows(n);
  for (auto& r : rows) {
    for (std::size_t i = 0; i < m; ++i)
      if (coin(gen)) r.push_back(static_cast<index_t>(i));
    if (nonempty_rows && r.empty()) r.push_back(static_cast<index_t>(pick(gen)));
  }
  return swrec::InteractionMatrix::from_rows(m, std::move(rows));
}

/// Each of m items joins R distinct clusters out of K, chosen uniformly.
inline swrec::OverlappingClusters random_clusters(std::size_t m, std::size_t K, std::size_t R, std::uint64_t seed) {
  swrec::Rng rng(seed);
  swrec::OverlappingClusters c;
  c.m = m;
  c.K = K;
  c.R = R;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<index_t> ids(K);
    for (std::size_t k = 0; k < K; ++k) ids[k] = static_cast<index_t>(k);
    rng.shuffle(ids);
    ids.resize(R);
    std::sort(ids.begin(), ids.end());
    c.members.insert(c.members.end(), ids.begin(), ids.end());
  }
  c.refresh_empty();
  return c;
}

inline swrec::ConnectivityMask random_mask(std::size_t m, std::size_t K, std::size_t R, std::uint64_t seed) {
  return swrec::build_mask(random_clusters(m, K, R, seed), m);
}

inline Eigen::MatrixXd dense(const swrec::InteractionMatrix& x) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(x.n()), static_cast<Eigen::Index>(x.m()));
  for (std::size_t u = 0; u < x.n(); ++u)
    for (index_t i : x.row(u)) d(static_cast<Eigen::Index>(u), i) = 1.0;
  return d;
}

/// Largest principal angle (radians) between the column spaces of two
/// matrices with orthonormal columns.
inline double max_principal_angle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a.transpose() * b);
  const double smin = std::clamp(svd.singularValues().minCoeff(), -1.0, 1.0);
  return std::acos(smin);
}

/// Fresh empty directory under the system temp path.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("swrec_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace swtest
