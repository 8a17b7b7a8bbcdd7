#pragma once

// Item embeddings: top eigenvectors of the normalized Laplacian, or the
// singular-value projection P = U_F Sigma_F of X^T.

#include <Eigen/Dense>
#include <string_view>
#include <vector>

#include "swrec/graph.hpp"
#include "swrec/ingest.hpp"
#include "swrec/lanczos.hpp"

namespace swrec {

enum class SpectralAlgo { laplacian, svd };

inline std::string_view to_string(SpectralAlgo a) { return a == SpectralAlgo::laplacian ? "laplacian" : "svd"; }

inline SpectralAlgo parse_spectral_algo(std::string_view s) {
  if (s == "laplacian") return SpectralAlgo::laplacian;
  if (s == "svd") return SpectralAlgo::svd;
  throw Error(ErrorKind::config, "unknown algorithm '" + std::string(s) + "' (expected laplacian or svd)");
}

struct SpectralEmbedding {
  std::size_t m = 0;
  std::size_t F = 0;
  Eigen::MatrixXd coords;    // m x F
  Eigen::VectorXd spectrum;  // eigenvalues or singular values, descending
  double worst_residual = 0.0;
  std::size_t matvecs = 0;
};

/// Largest eigenpairs of a symmetric sparse matrix.
inline KrylovResult top_eigenpairs(const SparseSymmetric& a, const EigsConfig& cfg) {
  require(cfg.F >= 1 && cfg.F <= a.dim, ErrorKind::config, "F must lie in [1, dimension]");
  auto op = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    y.resize(x.size());
    a.apply(x.data(), y.data());
  };
  return symmetric_top(op, a.dim, cfg.F, cfg, a.frobenius_norm());
}

/// Top-F eigenvectors of the Laplacian. Zero-degree items are dropped from the
/// operator and get exactly-zero embedding rows.
inline SpectralEmbedding top_eigenvectors(const NormalizedLaplacian& lap, const EigsConfig& cfg) {
  const std::size_t m = lap.m();
  std::vector<index_t> keep;
  std::vector<index_t> compressed(m, std::numeric_limits<index_t>::max());
  {
    std::size_t z = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (z < lap.zero_degree_items.size() && lap.zero_degree_items[z] == i) {
        ++z;
        continue;
      }
      compressed[i] = static_cast<index_t>(keep.size());
      keep.push_back(static_cast<index_t>(i));
    }
  }
  require(cfg.F >= 1 && cfg.F <= keep.size(), ErrorKind::config,
          "F = " + std::to_string(cfg.F) + " exceeds the " + std::to_string(keep.size()) + " nonzero-degree items");

  SparseSymmetric sub;
  sub.dim = keep.size();
  for (index_t i : keep) {
    for (auto p = lap.matrix.row_ptr[i]; p < lap.matrix.row_ptr[i + 1]; ++p) {
      const index_t c = compressed[lap.matrix.col[p]];
      if (c == std::numeric_limits<index_t>::max()) continue;
      sub.col.push_back(c);
      sub.val.push_back(lap.matrix.val[p]);
    }
    sub.row_ptr.push_back(sub.col.size());
  }

  const KrylovResult r = top_eigenpairs(sub, cfg);
  SpectralEmbedding e;
  e.m = m;
  e.F = cfg.F;
  e.coords = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(cfg.F));
  for (std::size_t c = 0; c < keep.size(); ++c) e.coords.row(keep[c]) = r.vectors.row(static_cast<Eigen::Index>(c));
  e.spectrum = r.values;
  e.worst_residual = r.worst_residual;
  e.matvecs = r.matvecs;
  return e;
}

/// Top-F left singular vectors of X^T (m x n) and P = U_F diag(sigma).
inline SpectralEmbedding top_singular_triplets(const InteractionMatrix& x, const EigsConfig& cfg) {
  const std::size_t m = x.m(), n = x.n();
  require(cfg.F >= 1 && cfg.F <= std::min(m, n), ErrorKind::config, "F must lie in [1, min(m, n)]");
  // A = X^T: (A v)_i = sum_{u : i in row u} v_u ; (A^T w)_u = sum_{i in row u} w_i
  auto apply_a = [&](const Eigen::VectorXd& v, Eigen::VectorXd& y) {
    y.setZero(static_cast<Eigen::Index>(m));
    for (std::size_t u = 0; u < n; ++u) {
      const double vu = v(static_cast<Eigen::Index>(u));
      if (vu == 0.0) continue;
      for (index_t i : x.row(u)) y(i) += vu;
    }
  };
  auto apply_at = [&](const Eigen::VectorXd& w, Eigen::VectorXd& y) {
    y.resize(static_cast<Eigen::Index>(n));
    for (std::size_t u = 0; u < n; ++u) {
      double s = 0.0;
      for (index_t i : x.row(u)) s += w(i);
      y(static_cast<Eigen::Index>(u)) = s;
    }
  };
  const KrylovResult r = singular_top(apply_a, apply_at, m, n, cfg.F, cfg);
  SpectralEmbedding e;
  e.m = m;
  e.F = cfg.F;
  e.coords = r.vectors * r.values.asDiagonal();
  e.spectrum = r.values;
  e.worst_residual = r.worst_residual;
  e.matvecs = r.matvecs;
  return e;
}

/// Dense variant for real-valued features H (n x m): SVD of H^T.
inline SpectralEmbedding top_singular_triplets(const Eigen::MatrixXd& h, const EigsConfig& cfg) {
  const auto m = static_cast<std::size_t>(h.cols()), n = static_cast<std::size_t>(h.rows());
  require(cfg.F >= 1 && cfg.F <= std::min(m, n), ErrorKind::config, "F must lie in [1, min(m, n)]");
  auto apply_a = [&](const Eigen::VectorXd& v, Eigen::VectorXd& y) { y.noalias() = h.transpose() * v; };
  auto apply_at = [&](const Eigen::VectorXd& w, Eigen::VectorXd& y) { y.noalias() = h * w; };
  const KrylovResult r = singular_top(apply_a, apply_at, m, n, cfg.F, cfg);
  SpectralEmbedding e;
  e.m = m;
  e.F = cfg.F;
  e.coords = r.vectors * r.values.asDiagonal();
  e.spectrum = r.values;
  e.worst_residual = r.worst_residual;
  e.matvecs = r.matvecs;
  return e;
}

}  // namespace swrec
