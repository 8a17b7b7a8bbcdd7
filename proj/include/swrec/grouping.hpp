#pragma once

// Overlapping item groups: normalize the embedding rows, run k-means, then
// attach every item to its R nearest centroids.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "swrec/graph.hpp"
#include "swrec/spectral.hpp"

namespace swrec {

enum class RowNormalization { row_sum, l2 };

inline std::string_view to_string(RowNormalization n) { return n == RowNormalization::row_sum ? "row_sum" : "l2"; }

inline RowNormalization parse_row_normalization(std::string_view s) {
  if (s == "row_sum") return RowNormalization::row_sum;
  if (s == "l2") return RowNormalization::l2;
  throw Error(ErrorKind::config, "unknown normalization '" + std::string(s) + "'");
}

struct GroupingConfig {
  std::size_t K = 1000;
  /// Overlap degree; 0 resolves to max(1, round(0.1 K)).
  std::size_t R = 0;
  std::size_t F = 50;
  std::size_t kmeans_max_iters = 100;
  /// Independent k-means seedings; the lowest-inertia run is kept.
  std::size_t kmeans_restarts = 20;
  std::uint64_t seed = 7;
  RowNormalization normalization = RowNormalization::l2;
  EigsConfig eigs{};

  std::size_t overlap() const {
    return R ? R : std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(K))));
  }

  void validate(std::size_t m) const {
    const std::size_t r = overlap();
    require(r >= 1 && r < K, ErrorKind::config, "need 1 <= R < K (R=" + std::to_string(r) + ", K=" + std::to_string(K) + ")");
    require(K <= m, ErrorKind::config, "K=" + std::to_string(K) + " exceeds the item count " + std::to_string(m));
    require(kmeans_max_iters >= 1, ErrorKind::config, "kmeans_max_iters must be >= 1");
    require(kmeans_restarts >= 1, ErrorKind::config, "kmeans_restarts must be >= 1");
    require(F >= 1, ErrorKind::config, "F must be >= 1");
  }
};

/// Each item belongs to exactly R of the K clusters.
struct OverlappingClusters {
  std::size_t m = 0;
  std::size_t K = 0;
  std::size_t R = 0;
  std::vector<index_t> members;  // m * R, item-major, each item's ids ascending
  Eigen::MatrixXd centroids;     // K x F
  double inertia = 0.0;
  std::vector<index_t> empty_clusters;

  std::span<const index_t> of(std::size_t item) const { return {members.data() + item * R, R}; }

  std::vector<std::size_t> cluster_sizes() const {
    std::vector<std::size_t> s(K, 0);
    for (index_t c : members) ++s[c];
    return s;
  }

  void refresh_empty() {
    empty_clusters.clear();
    const auto s = cluster_sizes();
    for (std::size_t c = 0; c < K; ++c)
      if (s[c] == 0) empty_clusters.push_back(static_cast<index_t>(c));
  }
};

/// Every item in every cluster (the fully connected structure).
inline OverlappingClusters saturated_clusters(std::size_t m, std::size_t K) {
  OverlappingClusters c;
  c.m = m;
  c.K = K;
  c.R = K;
  c.members.reserve(m * K);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < K; ++j) c.members.push_back(static_cast<index_t>(j));
  return c;
}

/// Divide each row by its sum (row_sum) or Euclidean norm (l2). Rows whose
/// divisor has magnitude <= 1e-12 are left untouched.
inline Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& points, RowNormalization mode) {
  constexpr double eps = 1e-12;
  Eigen::MatrixXd out = points;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double d = mode == RowNormalization::row_sum ? out.row(i).sum() : out.row(i).norm();
    if (std::abs(d) > eps) out.row(i) /= d;
  }
  return out;
}

inline SpectralEmbedding normalize_rows(SpectralEmbedding e, RowNormalization mode) {
  e.coords = normalize_rows(e.coords, mode);
  return e;
}

namespace detail {

inline double squared_distance(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b, Eigen::Index j) {
  double s = 0.0;
  for (Eigen::Index f = 0; f < a.cols(); ++f) {
    const double d = a(i, f) - b(j, f);
    s += d * d;
  }
  return s;
}

}  // namespace detail

struct KMeansResult {
  Eigen::MatrixXd centroids;  // K x F
  std::vector<index_t> labels;
  double inertia = 0.0;
  std::size_t iterations = 0;
  std::vector<double> inertia_history;  // after every update step
  std::size_t reseeded = 0;             // empty clusters reinitialized
};

/// Greedy k-means++ seeding: each new centroid is the best of 2 + ln K
/// candidates drawn by D^2 sampling, judged by the resulting potential.
inline Eigen::MatrixXd kmeans_plus_plus(const Eigen::MatrixXd& points, std::size_t K, Rng& rng) {
  const Eigen::Index m = points.rows();
  const auto mu = static_cast<std::size_t>(m);
  Eigen::MatrixXd centroids(static_cast<Eigen::Index>(K), points.cols());
  std::vector<char> chosen(mu, 0);
  auto first = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m)));
  centroids.row(0) = points.row(first);
  chosen[static_cast<std::size_t>(first)] = 1;
  std::vector<double> d2(mu);
  for (Eigen::Index i = 0; i < m; ++i) d2[static_cast<std::size_t>(i)] = detail::squared_distance(points, i, centroids, 0);
  const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(K)));
  std::vector<double> cand_d2(mu), best_d2(mu);
  for (std::size_t c = 1; c < K; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < mu; ++i)
      if (!chosen[i]) total += d2[i];
    Eigen::Index pick = -1;
    if (total > 0.0) {
      double best_pot = std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < trials; ++t) {
        double r = rng.uniform() * total;
        Eigen::Index cand = -1;
        for (Eigen::Index i = 0; i < m; ++i) {
          if (chosen[static_cast<std::size_t>(i)]) continue;
          r -= d2[static_cast<std::size_t>(i)];
          if (r < 0.0 || cand < 0) cand = i;
          if (r < 0.0) break;
        }
        double pot = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
          const auto iu = static_cast<std::size_t>(i);
          cand_d2[iu] = std::min(d2[iu], (points.row(i) - points.row(cand)).squaredNorm());
          pot += cand_d2[iu];
        }
        if (pot < best_pot) {
          best_pot = pot;
          pick = cand;
          best_d2.swap(cand_d2);
        }
      }
      d2.swap(best_d2);
    } else {
      // Every remaining point coincides with a centroid; take the lowest index.
      for (Eigen::Index i = 0; i < m && pick < 0; ++i)
        if (!chosen[static_cast<std::size_t>(i)]) pick = i;
    }
    centroids.row(static_cast<Eigen::Index>(c)) = points.row(pick);
    chosen[static_cast<std::size_t>(pick)] = 1;
  }
  return centroids;
}

namespace detail {

inline KMeansResult lloyd_from_seeding(const Eigen::MatrixXd& points, std::size_t K, std::size_t max_iters, Rng& rng) {
  const auto m = static_cast<std::size_t>(points.rows());
  KMeansResult res;
  res.centroids = kmeans_plus_plus(points, K, rng);
  res.labels.assign(m, 0);
  std::vector<double> dist(m, 0.0);

  auto assign = [&]() {
    std::size_t changed = 0;
    for (std::size_t i = 0; i < m; ++i) {
      index_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < K; ++c) {
        const double d = detail::squared_distance(points, static_cast<Eigen::Index>(i), res.centroids,
                                                  static_cast<Eigen::Index>(c));
        if (d < best_d) {
          best_d = d;
          best = static_cast<index_t>(c);
        }
      }
      if (best != res.labels[i]) ++changed;
      res.labels[i] = best;
      dist[i] = best_d;
    }
    return changed;
  };

  assign();
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < max_iters; ++it) {
    // Update step.
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K), points.cols());
    std::vector<std::size_t> counts(K, 0);
    for (std::size_t i = 0; i < m; ++i) {
      sums.row(res.labels[i]) += points.row(static_cast<Eigen::Index>(i));
      ++counts[res.labels[i]];
    }
    std::vector<char> taken(m, 0);
    for (std::size_t c = 0; c < K; ++c) {
      if (counts[c] > 0) {
        res.centroids.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
      }
    }
    double inertia = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      dist[i] = detail::squared_distance(points, static_cast<Eigen::Index>(i), res.centroids, res.labels[i]);
      inertia += dist[i];
    }
    for (std::size_t c = 0; c < K; ++c) {
      if (counts[c] > 0) continue;
      std::size_t far = m;
      for (std::size_t i = 0; i < m; ++i)
        if (!taken[i] && (far == m || dist[i] > dist[far])) far = i;
      if (far == m) continue;
      taken[far] = 1;
      res.centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(far));
      ++res.reseeded;
    }
    if (inertia > prev + 1e-12 * std::max(1.0, prev))
      throw Error(ErrorKind::integrity, "k-means objective increased at iteration " + std::to_string(it));
    prev = inertia;
    res.inertia_history.push_back(inertia);
    res.iterations = it + 1;
    if (assign() == 0) break;
  }
  res.inertia = 0.0;
  for (std::size_t i = 0; i < m; ++i) res.inertia += dist[i];
  return res;
}

}  // namespace detail

/// Lloyd iterations from greedy k-means++ seeding, repeated from `restarts`
/// independent seedings; the run with the lowest inertia wins (ties keep the
/// earlier run). Each run stops after `max_iters` or when no label changes.
/// Empty clusters are moved to the point farthest from its current centroid.
/// Throws an integrity error if the objective ever grows within a run.
inline KMeansResult kmeans(const Eigen::MatrixXd& points, std::size_t K, std::size_t max_iters, std::uint64_t seed,
                           std::size_t restarts = 20) {
  const auto m = static_cast<std::size_t>(points.rows());
  require(K >= 1 && K <= m, ErrorKind::config, "K=" + std::to_string(K) + " must lie in [1, " + std::to_string(m) + "]");
  require(max_iters >= 1, ErrorKind::config, "max_iters must be >= 1");
  require(restarts >= 1, ErrorKind::config, "restarts must be >= 1");
  KMeansResult best;
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, 0x6b3ea25u + r));
    auto run = detail::lloyd_from_seeding(points, K, max_iters, rng);
    if (r == 0 || run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

/// The R centroids nearest each point (ties to the lower centroid index),
/// stored in ascending id order.
inline OverlappingClusters assign_overlapping(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids,
                                              std::size_t R) {
  const auto m = static_cast<std::size_t>(points.rows());
  const auto K = static_cast<std::size_t>(centroids.rows());
  require(R >= 1 && R <= K, ErrorKind::config, "R must lie in [1, K]");
  require(points.cols() == centroids.cols(), ErrorKind::integrity, "points and centroids differ in dimension");
  OverlappingClusters out;
  out.m = m;
  out.K = K;
  out.R = R;
  out.centroids = centroids;
  out.members.resize(m * R);
  std::vector<std::pair<double, index_t>> d(K);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t c = 0; c < K; ++c)
      d[c] = {detail::squared_distance(points, static_cast<Eigen::Index>(i), centroids, static_cast<Eigen::Index>(c)),
              static_cast<index_t>(c)};
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(R), d.end());
    auto* dst = out.members.data() + i * R;
    for (std::size_t r = 0; r < R; ++r) dst[r] = d[r].second;
    std::sort(dst, dst + R);
  }
  out.refresh_empty();
  return out;
}

struct GroupingResult {
  OverlappingClusters clusters;
  SpectralAlgo algo = SpectralAlgo::laplacian;
  GroupingConfig config;
  Eigen::VectorXd spectrum;
  std::size_t kmeans_iterations = 0;
  double spectral_seconds = 0.0;
  double kmeans_seconds = 0.0;
};

namespace detail {

inline GroupingResult finish_grouping(SpectralEmbedding emb, const GroupingConfig& cfg, SpectralAlgo algo,
                                      double spectral_seconds) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const Eigen::MatrixXd pts = normalize_rows(emb.coords, cfg.normalization);
  const KMeansResult km = kmeans(pts, cfg.K, cfg.kmeans_max_iters, cfg.seed, cfg.kmeans_restarts);
  GroupingResult out;
  out.clusters = assign_overlapping(pts, km.centroids, cfg.overlap());
  out.clusters.inertia = km.inertia;
  out.kmeans_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  out.algo = algo;
  out.config = cfg;
  out.config.R = cfg.overlap();
  out.spectrum = emb.spectrum;
  out.kmeans_iterations = km.iterations;
  out.spectral_seconds = spectral_seconds;
  return out;
}

inline EigsConfig eigs_for(const GroupingConfig& cfg) {
  EigsConfig e = cfg.eigs;
  e.F = cfg.F;
  e.seed = derive_seed(cfg.seed, 0xe165u);
  return e;
}

}  // namespace detail

/// Embedding stage on its own: graph + Laplacian + eigenvectors, or the SVD
/// projection. Exposed so callers can cache it independently of K and R.
inline SpectralEmbedding item_embedding(const InteractionMatrix& x, std::size_t F, SpectralAlgo algo,
                                        const EigsConfig& eigs_base, std::uint64_t seed) {
  EigsConfig e = eigs_base;
  e.F = F;
  e.seed = derive_seed(seed, 0xe165u);
  if (algo == SpectralAlgo::laplacian) return top_eigenvectors(build_laplacian(build_cooccurrence(x)), e);
  return top_singular_triplets(x, e);
}

/// Grouping from a precomputed embedding (normalize, k-means, assign).
inline GroupingResult group_embedding(const SpectralEmbedding& emb, const GroupingConfig& cfg, SpectralAlgo algo) {
  cfg.validate(emb.m);
  return detail::finish_grouping(emb, cfg, algo, 0.0);
}

/// End-to-end item grouping on binary interactions.
inline GroupingResult item_grouping(const InteractionMatrix& x, const GroupingConfig& cfg, SpectralAlgo algo) {
  cfg.validate(x.m());
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const EigsConfig e = detail::eigs_for(cfg);
  SpectralEmbedding emb = algo == SpectralAlgo::laplacian
                              ? top_eigenvectors(build_laplacian(build_cooccurrence(x)), e)
                              : top_singular_triplets(x, e);
  const double t_spec = std::chrono::duration<double>(clock::now() - t0).count();
  return detail::finish_grouping(std::move(emb), cfg, algo, t_spec);
}

/// Item grouping on real-valued observed variables (rows = examples), used
/// when stacking: the columns of `features` play the role of items.
inline GroupingResult item_grouping(const Eigen::MatrixXd& features, const GroupingConfig& cfg, SpectralAlgo algo) {
  const auto m = static_cast<std::size_t>(features.cols());
  cfg.validate(m);
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const EigsConfig e = detail::eigs_for(cfg);
  SpectralEmbedding emb;
  if (algo == SpectralAlgo::laplacian) {
    const Eigen::MatrixXd gram = features.transpose() * features;
    emb = top_eigenvectors(laplacian_from_gram(gram), e);
  } else {
    emb = top_singular_triplets(features, e);
  }
  const double t_spec = std::chrono::duration<double>(clock::now() - t0).count();
  return detail::finish_grouping(std::move(emb), cfg, algo, t_spec);
}

/// Adjusted Rand index between two hard labelings of the same items.
inline double adjusted_rand_index(std::span<const index_t> a, std::span<const index_t> b) {
  require(a.size() == b.size(), ErrorKind::integrity, "labelings differ in length");
  const std::size_t n = a.size();
  std::map<std::pair<index_t, index_t>, std::size_t> joint;
  std::map<index_t, std::size_t> ca, cb;
  for (std::size_t i = 0; i < n; ++i) {
    ++joint[{a[i], b[i]}];
    ++ca[a[i]];
    ++cb[b[i]];
  }
  auto c2 = [](std::size_t v) { return 0.5 * static_cast<double>(v) * static_cast<double>(v > 0 ? v - 1 : 0); };
  double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [k, v] : joint) sum_joint += c2(v);
  for (const auto& [k, v] : ca) sum_a += c2(v);
  for (const auto& [k, v] : cb) sum_b += c2(v);
  const double total = c2(n);
  const double expected = total > 0.0 ? sum_a * sum_b / total : 0.0;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (sum_joint - expected) / (max_index - expected);
}

}  // namespace swrec
