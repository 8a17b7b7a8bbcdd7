#pragma once

// Restarted Krylov solvers for the largest eigenpairs of a symmetric operator
// and the largest singular triplets of a rectangular one. Both keep the full
// basis and reorthogonalize every new vector twice (classical Gram-Schmidt),
// restart by keeping the best Ritz vectors plus the residual direction, and
// verify the returned pairs with explicit residuals.
//
// Operators are callables `op(const Eigen::VectorXd& x, Eigen::VectorXd& y)`.

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <cstdint>

#include "swrec/core.hpp"

namespace swrec {

struct EigsConfig {
  std::size_t F = 50;
  /// Maximum number of restarts; 0 means 10 * F.
  std::size_t max_iterations = 0;
  /// Relative residual threshold.
  double tolerance = 1e-8;
  std::uint64_t seed = 1;
  /// Krylov subspace size; 0 picks max(2F + 1, F + 16) capped by the dimension.
  std::size_t krylov_dim = 0;

  std::size_t max_restarts() const { return max_iterations ? max_iterations : 10 * F; }
};

struct KrylovResult {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // one column per value (left singular vectors for SVD)
  double worst_residual = 0.0;
  std::size_t restarts = 0;
  std::size_t matvecs = 0;
};

namespace detail {

/// w -= B (B^T w), twice. Returns the accumulated coefficients.
inline Eigen::VectorXd project_out(Eigen::VectorXd& w, const Eigen::Ref<const Eigen::MatrixXd>& basis) {
  if (basis.cols() == 0) return Eigen::VectorXd();
  Eigen::VectorXd c = basis.transpose() * w;
  w.noalias() -= basis * c;
  Eigen::VectorXd c2 = basis.transpose() * w;
  w.noalias() -= basis * c2;
  return c + c2;
}

inline Eigen::VectorXd random_sign_vector(std::size_t dim, Rng& rng) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.sign();
  return v;
}

/// Random unit vector orthogonal to the columns of both bases.
inline Eigen::VectorXd random_orthogonal(std::size_t dim, Rng& rng, const Eigen::Ref<const Eigen::MatrixXd>& a,
                                         const Eigen::Ref<const Eigen::MatrixXd>& b) {
  for (int attempt = 0; attempt < 16; ++attempt) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-1.0, 1.0);
    project_out(v, b);
    project_out(v, a);
    const double nv = v.norm();
    if (nv > 1e-8) return v / nv;
  }
  throw Error(ErrorKind::numeric, "could not extend the Krylov basis: space exhausted");
}

/// Make the entry of largest magnitude of every column positive.
inline void fix_signs(Eigen::MatrixXd& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index r = 0; r < vectors.rows(); ++r)
      if (std::abs(vectors(r, c)) > best_abs) {
        best_abs = std::abs(vectors(r, c));
        best = r;
      }
    if (vectors.rows() > 0 && vectors(best, c) < 0.0) vectors.col(c) *= -1.0;
  }
}

inline std::size_t krylov_size(const EigsConfig& cfg, std::size_t nev, std::size_t dim_eff) {
  const std::size_t want = cfg.krylov_dim ? cfg.krylov_dim : std::max(2 * nev + 1, nev + 16);
  return std::min(std::max(want, nev), dim_eff);
}

}  // namespace detail

/// Thick-restart Lanczos for the `nev` largest eigenpairs of a symmetric
/// operator, optionally deflated against an orthonormal `locked` basis
/// (the operator is then (I - L L^T) A (I - L L^T) on the complement).
/// Convergence: ||A x - theta x|| <= tolerance * scale for every pair.
template <class Op>
KrylovResult lanczos_largest(Op&& op, std::size_t dim, std::size_t nev, const EigsConfig& cfg, double scale,
                             const Eigen::MatrixXd& locked = Eigen::MatrixXd()) {
  const std::size_t n_locked = static_cast<std::size_t>(locked.cols());
  require(nev >= 1, ErrorKind::config, "need at least one eigenpair");
  require(n_locked < dim && nev <= dim - n_locked, ErrorKind::config,
          "requested " + std::to_string(nev) + " eigenpairs of a " + std::to_string(dim - n_locked) +
              "-dimensional operator");
  require(cfg.tolerance > 0.0, ErrorKind::config, "tolerance must be positive");
  if (!(scale > 0.0)) scale = 1.0;

  const std::size_t k = detail::krylov_size(cfg, nev, dim - n_locked);
  const auto K = static_cast<Eigen::Index>(k);
  const double breakdown = 1e-13 * scale;
  const double target = cfg.tolerance * scale;
  const Eigen::Ref<const Eigen::MatrixXd> L = locked;

  Rng rng(derive_seed(cfg.seed, 0x1a4c205u));
  KrylovResult result;

  auto apply = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    op(x, y);
    ++result.matvecs;
    if (n_locked) detail::project_out(y, L);
  };

  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), K + 1);
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(K, K);
  {
    Eigen::VectorXd v0 = detail::random_sign_vector(dim, rng);
    detail::project_out(v0, L);
    const double nv = v0.norm();
    V.col(0) = nv > 1e-8 ? Eigen::VectorXd(v0 / nv) : detail::random_orthogonal(dim, rng, V.leftCols(0), L);
  }

  Eigen::VectorXd w(static_cast<Eigen::Index>(dim));
  Eigen::Index start = 0;
  double beta_last = 0.0;
  double worst = 0.0;
  for (std::size_t restart = 0;; ++restart) {
    for (Eigen::Index j = start; j < K; ++j) {
      apply(V.col(j), w);
      const Eigen::VectorXd coeff = detail::project_out(w, V.leftCols(j + 1));
      if (n_locked) detail::project_out(w, L);
      T.col(j).head(j + 1) = coeff;
      T.row(j).head(j + 1) = coeff.transpose();
      const double beta = w.norm();
      if (j + 1 < K) {
        V.col(j + 1) = beta > breakdown ? Eigen::VectorXd(w / beta)
                                        : detail::random_orthogonal(dim, rng, V.leftCols(j + 1), L);
      } else {
        beta_last = beta > breakdown ? beta : 0.0;
        if (beta_last > 0.0) V.col(K) = w / beta;
      }
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    const Eigen::VectorXd theta = es.eigenvalues().reverse();
    const Eigen::MatrixXd S = es.eigenvectors().rowwise().reverse();

    worst = 0.0;
    for (std::size_t i = 0; i < nev; ++i)
      worst = std::max(worst, beta_last * std::abs(S(K - 1, static_cast<Eigen::Index>(i))));

    if (worst <= target) {
      const auto NEV = static_cast<Eigen::Index>(nev);
      Eigen::MatrixXd X = V.leftCols(K) * S.leftCols(NEV);
      double explicit_worst = 0.0;
      Eigen::VectorXd ax(static_cast<Eigen::Index>(dim));
      for (Eigen::Index i = 0; i < NEV; ++i) {
        apply(X.col(i), ax);
        explicit_worst = std::max(explicit_worst, (ax - theta(i) * X.col(i)).norm());
      }
      if (explicit_worst <= target) {
        detail::fix_signs(X);
        result.values = theta.head(NEV);
        result.vectors = std::move(X);
        result.worst_residual = explicit_worst / scale;
        result.restarts = restart;
        return result;
      }
      worst = explicit_worst;
    }
    if (restart >= cfg.max_restarts())
      throw ConvergenceError("Lanczos did not converge after " + std::to_string(restart) + " restarts",
                             worst / scale);

    // Keep the leading Ritz vectors and continue from the residual direction.
    const Eigen::Index keep = std::max<Eigen::Index>(
        1, std::min<Eigen::Index>(K - 1, static_cast<Eigen::Index>(nev + (k - nev) / 2)));
    const Eigen::MatrixXd ritz = V.leftCols(K) * S.leftCols(keep);
    const Eigen::VectorXd residual_dir = V.col(K);
    V.leftCols(keep) = ritz;
    if (beta_last > 0.0)
      V.col(keep) = residual_dir;
    else
      V.col(keep) = detail::random_orthogonal(dim, rng, V.leftCols(keep), L);
    T.setZero();
    T.diagonal().head(keep) = theta.head(keep);
    start = keep;
  }
}

/// Largest eigenpairs with a guard against missed copies of repeated
/// eigenvalues: a deflated single-vector run probes the complement of the
/// converged basis and swaps in anything larger than the smallest kept value.
template <class Op>
KrylovResult symmetric_top(Op&& op, std::size_t dim, std::size_t nev, const EigsConfig& cfg, double scale) {
  KrylovResult res = lanczos_largest(op, dim, nev, cfg, scale);
  if (!(scale > 0.0)) scale = 1.0;
  for (std::size_t pass = 0; pass < nev && dim > nev; ++pass) {
    EigsConfig probe_cfg = cfg;
    probe_cfg.seed = derive_seed(cfg.seed, 0x9806eu, pass);
    KrylovResult probe = lanczos_largest(op, dim, 1, probe_cfg, scale, res.vectors);
    res.matvecs += probe.matvecs;
    const auto last = static_cast<Eigen::Index>(nev - 1);
    if (probe.values(0) <= res.values(last) + cfg.tolerance * scale) break;
    // Insert the probe pair in order, dropping the smallest kept pair.
    Eigen::Index pos = last;
    while (pos > 0 && res.values(pos - 1) < probe.values(0)) --pos;
    for (Eigen::Index i = last; i > pos; --i) {
      res.values(i) = res.values(i - 1);
      res.vectors.col(i) = res.vectors.col(i - 1);
    }
    res.values(pos) = probe.values(0);
    res.vectors.col(pos) = probe.vectors.col(0);
    res.worst_residual = std::max(res.worst_residual, probe.worst_residual);
  }
  return res;
}

/// Thick-restart Golub-Kahan bidiagonalization for the `nev` largest singular
/// triplets of an m x n operator A (`apply_a`: R^n -> R^m, `apply_at`: R^m -> R^n),
/// optionally deflated on the left against an orthonormal m x L basis.
/// Returns singular values and left singular vectors. Convergence:
/// ||A A^T u - sigma^2 u|| <= tolerance * s^2 with s = max(sigma_1, scale);
/// pass the norm of the undeflated operator as `scale` when deflating so that
/// a (numerically) zero remainder is recognized as such.
template <class OpA, class OpAt>
KrylovResult golub_kahan_largest(OpA&& apply_a, OpAt&& apply_at, std::size_t m, std::size_t n, std::size_t nev,
                                 const EigsConfig& cfg, const Eigen::MatrixXd& locked_left = Eigen::MatrixXd(),
                                 double scale = 0.0) {
  const std::size_t n_locked = static_cast<std::size_t>(locked_left.cols());
  require(nev >= 1, ErrorKind::config, "need at least one singular triplet");
  require(n_locked < m, ErrorKind::config, "deflation basis fills the space");
  const std::size_t dim_eff = std::min(m - n_locked, n);
  require(nev <= dim_eff, ErrorKind::config,
          "requested " + std::to_string(nev) + " singular triplets, rank bound is " + std::to_string(dim_eff));
  require(cfg.tolerance > 0.0, ErrorKind::config, "tolerance must be positive");

  const std::size_t k = detail::krylov_size(cfg, nev, dim_eff);
  const auto K = static_cast<Eigen::Index>(k);
  const Eigen::Ref<const Eigen::MatrixXd> L = locked_left;
  const Eigen::MatrixXd empty;

  Rng rng(derive_seed(cfg.seed, 0x6b1d1a6u));
  KrylovResult result;

  auto left = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    apply_a(x, y);
    ++result.matvecs;
    if (n_locked) detail::project_out(y, L);
  };
  auto right = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    apply_at(x, y);
    ++result.matvecs;
  };

  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), K);
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), K + 1);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(K, K);
  {
    Eigen::VectorXd v0 = detail::random_sign_vector(n, rng);
    V.col(0) = v0 / v0.norm();
  }

  // Breakdown threshold relative to the running largest coefficient.
  double magnitude = 0.0;
  Eigen::VectorXd w(static_cast<Eigen::Index>(m)), g(static_cast<Eigen::Index>(n));
  Eigen::Index start = 0;
  double beta_last = 0.0;
  for (std::size_t restart = 0;; ++restart) {
    for (Eigen::Index j = start; j < K; ++j) {
      left(V.col(j), w);
      const Eigen::VectorXd coeff = detail::project_out(w, U.leftCols(j));
      if (n_locked) detail::project_out(w, L);
      if (j > 0) B.col(j).head(j) = coeff;
      const double alpha = w.norm();
      magnitude = std::max({magnitude, alpha, coeff.size() ? coeff.cwiseAbs().maxCoeff() : 0.0});
      const double breakdown = 1e-13 * std::max({magnitude, scale, 1e-300});
      if (alpha > breakdown) {
        U.col(j) = w / alpha;
        B(j, j) = alpha;
      } else {
        U.col(j) = detail::random_orthogonal(m, rng, U.leftCols(j), L);
        B(j, j) = 0.0;
      }

      right(U.col(j), g);
      detail::project_out(g, V.leftCols(j + 1));
      const double beta = g.norm();
      magnitude = std::max(magnitude, beta);
      if (j + 1 < K) {
        V.col(j + 1) = beta > breakdown ? Eigen::VectorXd(g / beta)
                                        : detail::random_orthogonal(n, rng, V.leftCols(j + 1), empty);
      } else {
        beta_last = beta > breakdown ? beta : 0.0;
        if (beta_last > 0.0) V.col(K) = g / beta;
      }
    }

    if (static_cast<std::size_t>(K) == m - n_locked && static_cast<std::size_t>(K) < n) {
      // U spans the whole (deflated) left space, so A = U U^T A exactly and
      // the small matrix U^T A = Z^T carries the full spectrum.
      Eigen::MatrixXd Z(static_cast<Eigen::Index>(n), K);
      for (Eigen::Index j = 0; j < K; ++j) {
        right(U.col(j), g);
        Z.col(j) = g;
      }
      Eigen::JacobiSVD<Eigen::MatrixXd> zs(Z.transpose(), Eigen::ComputeFullU);
      const auto NEV = static_cast<Eigen::Index>(nev);
      Eigen::MatrixXd X = U * zs.matrixU().leftCols(NEV);
      detail::fix_signs(X);
      result.values = zs.singularValues().head(NEV);
      result.vectors = std::move(X);
      result.worst_residual = 0.0;
      result.restarts = restart;
      return result;
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(B, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::VectorXd sigma = svd.singularValues();
    const Eigen::MatrixXd& Ub = svd.matrixU();
    const Eigen::MatrixXd& Vb = svd.matrixV();
    const double sigma1 = sigma(0);
    const double norm_est = std::max(sigma1, scale);
    const double target = cfg.tolerance * norm_est * norm_est;

    double worst = 0.0;
    for (std::size_t i = 0; i < nev; ++i)
      worst = std::max(worst, beta_last * std::abs(Ub(K - 1, static_cast<Eigen::Index>(i))) * sigma1);

    if (worst <= target) {
      const auto NEV = static_cast<Eigen::Index>(nev);
      Eigen::MatrixXd X = U * Ub.leftCols(NEV);
      double explicit_worst = 0.0;
      Eigen::VectorXd t(static_cast<Eigen::Index>(n)), aat(static_cast<Eigen::Index>(m));
      for (Eigen::Index i = 0; i < NEV; ++i) {
        right(X.col(i), t);
        left(t, aat);
        explicit_worst = std::max(explicit_worst, (aat - sigma(i) * sigma(i) * X.col(i)).norm());
      }
      if (explicit_worst <= target) {
        detail::fix_signs(X);
        result.values = sigma.head(NEV);
        result.vectors = std::move(X);
        result.worst_residual = norm_est > 0.0 ? explicit_worst / (norm_est * norm_est) : 0.0;
        result.restarts = restart;
        return result;
      }
      worst = explicit_worst;
    }
    if (restart >= cfg.max_restarts())
      throw ConvergenceError("bidiagonalization did not converge after " + std::to_string(restart) + " restarts",
                             norm_est > 0.0 ? worst / (norm_est * norm_est) : worst);

    const Eigen::Index keep = std::max<Eigen::Index>(
        1, std::min<Eigen::Index>(K - 1, static_cast<Eigen::Index>(nev + (k - nev) / 2)));
    const Eigen::MatrixXd u_ritz = U * Ub.leftCols(keep);
    const Eigen::MatrixXd v_ritz = V.leftCols(K) * Vb.leftCols(keep);
    const Eigen::VectorXd residual_dir = V.col(K);
    U.leftCols(keep) = u_ritz;
    V.leftCols(keep) = v_ritz;
    if (beta_last > 0.0)
      V.col(keep) = residual_dir;
    else
      V.col(keep) = detail::random_orthogonal(n, rng, V.leftCols(keep), empty);
    B.setZero();
    B.diagonal().head(keep) = sigma.head(keep);
    start = keep;
  }
}

/// Largest singular triplets with the same repeated-value guard as
/// `symmetric_top`, probing with left deflation.
template <class OpA, class OpAt>
KrylovResult singular_top(OpA&& apply_a, OpAt&& apply_at, std::size_t m, std::size_t n, std::size_t nev,
                          const EigsConfig& cfg) {
  KrylovResult res = golub_kahan_largest(apply_a, apply_at, m, n, nev, cfg);
  const std::size_t rank_bound = std::min(m, n);
  for (std::size_t pass = 0; pass < nev && rank_bound > nev; ++pass) {
    EigsConfig probe_cfg = cfg;
    probe_cfg.seed = derive_seed(cfg.seed, 0x5a0beu, pass);
    KrylovResult probe = golub_kahan_largest(apply_a, apply_at, m, n, 1, probe_cfg, res.vectors, res.values(0));
    res.matvecs += probe.matvecs;
    const auto last = static_cast<Eigen::Index>(nev - 1);
    const double s1 = res.values(0);
    // Compare squared values: the residual scale is sigma_1^2.
    if (probe.values(0) * probe.values(0) <= res.values(last) * res.values(last) + cfg.tolerance * s1 * s1) break;
    Eigen::Index pos = last;
    while (pos > 0 && res.values(pos - 1) < probe.values(0)) --pos;
    for (Eigen::Index i = last; i > pos; --i) {
      res.values(i) = res.values(i - 1);
      res.vectors.col(i) = res.vectors.col(i - 1);
    }
    res.values(pos) = probe.values(0);
    res.vectors.col(pos) = probe.vectors.col(0);
  }
  return res;
}

}  // namespace swrec
