#pragma once

// Weight-matrix diagnostics: spectral norm by power iteration, Frobenius
// norm, stable rank, and the layer-product generalization bound
//   sqrt( prod_j ||W_j||_2^2 * sum_j srank(W_j) / n ).
// Constant factors are dropped, so only comparisons between models mean
// anything.

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swrec/core.hpp"
#include "swrec/structure.hpp"
#include "swrec/swdae.hpp"

namespace swrec {

struct PowerIterationConfig {
  double tol = 1e-6;
  std::size_t max_iters = 1000;
  std::uint64_t seed = 3;
};

struct SpectralNormResult {
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  double relative_residual = 0.0;
};

/// Largest singular value of an operator A (rows x cols) given products
/// A v and A^T u. Iterates v <- A^T A v / ||.|| until
/// ||A^T A v - sigma^2 v|| <= tol * sigma^2. Non-convergence is reported in
/// the result, not thrown.
template <class ApplyA, class ApplyAt>
SpectralNormResult power_iteration(ApplyA&& apply_a, ApplyAt&& apply_at, std::size_t rows, std::size_t cols,
                                   const PowerIterationConfig& cfg) {
  SpectralNormResult res;
  if (rows == 0 || cols == 0) {
    res.converged = true;
    return res;
  }
  Rng rng(derive_seed(cfg.seed, 0x9e7u));
  Eigen::VectorXd v(static_cast<Eigen::Index>(cols));
  for (auto& x : v) x = rng.uniform(0.5, 1.5) * rng.sign();
  v.normalize();
  Eigen::VectorXd u(static_cast<Eigen::Index>(rows)), w(static_cast<Eigen::Index>(cols));
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    apply_a(v, u);
    apply_at(u, w);
    const double lambda = v.dot(w);  // Rayleigh quotient, = ||A v||^2
    res.iterations = it;
    res.value = std::sqrt(std::max(lambda, 0.0));
    const double norm_w = w.norm();
    if (norm_w == 0.0) {
      res.converged = true;
      res.relative_residual = 0.0;
      return res;
    }
    res.relative_residual = (w - lambda * v).norm() / std::max(lambda, 1e-300);
    if (res.relative_residual <= cfg.tol) {
      res.converged = true;
      return res;
    }
    v = w / norm_w;
  }
  return res;
}

/// Spectral norm of the matrix whose nonzeros sit on `p` with values `w`.
template <class T>
SpectralNormResult spectral_norm(const BipartitePattern& p, std::span<const T> w, const PowerIterationConfig& cfg = {}) {
  require(w.size() == p.nnz(), ErrorKind::integrity, "weight array does not match the pattern");
  for (T x : w) require(std::isfinite(static_cast<double>(x)), ErrorKind::numeric, "non-finite weight");
  auto apply_a = [&](const Eigen::VectorXd& v, Eigen::VectorXd& u) {
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double s = 0.0;
      for (auto q = p.row_ptr()[i]; q < p.row_ptr()[i + 1]; ++q) s += static_cast<double>(w[q]) * v(p.col()[q]);
      u(static_cast<Eigen::Index>(i)) = s;
    }
  };
  auto apply_at = [&](const Eigen::VectorXd& u, Eigen::VectorXd& v) {
    v.setZero();
    for (std::size_t i = 0; i < p.rows(); ++i) {
      const double ui = u(static_cast<Eigen::Index>(i));
      for (auto q = p.row_ptr()[i]; q < p.row_ptr()[i + 1]; ++q) v(p.col()[q]) += static_cast<double>(w[q]) * ui;
    }
  };
  return power_iteration(apply_a, apply_at, p.rows(), p.cols(), cfg);
}

inline SpectralNormResult spectral_norm(const Eigen::MatrixXd& a, const PowerIterationConfig& cfg = {}) {
  auto apply_a = [&](const Eigen::VectorXd& v, Eigen::VectorXd& u) { u.noalias() = a * v; };
  auto apply_at = [&](const Eigen::VectorXd& u, Eigen::VectorXd& v) { v.noalias() = a.transpose() * u; };
  return power_iteration(apply_a, apply_at, static_cast<std::size_t>(a.rows()), static_cast<std::size_t>(a.cols()),
                         cfg);
}

template <class T>
double frobenius_norm(std::span<const T> w) {
  double s = 0.0;
  for (T x : w) s += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(s);
}

inline double stable_rank(double frobenius, double spectral) {
  require(spectral > 0.0, ErrorKind::undefined, "stable rank undefined for a zero matrix");
  return (frobenius * frobenius) / (spectral * spectral);
}

template <class T>
double stable_rank(const BipartitePattern& p, std::span<const T> w, const PowerIterationConfig& cfg = {}) {
  return stable_rank(frobenius_norm(w), spectral_norm(p, w, cfg).value);
}

inline double stable_rank(const Eigen::MatrixXd& a, const PowerIterationConfig& cfg = {}) {
  return stable_rank(a.norm(), spectral_norm(a, cfg).value);
}

struct MatrixNorms {
  std::string name;
  std::size_t rows = 0, cols = 0;
  double spectral_norm = 0.0;
  double frobenius_norm = 0.0;
  double stable_rank = 0.0;
  bool converged = true;
};

/// Bound from per-layer spectral norms and stable ranks, with the product
/// taken in log space.
inline double generalization_bound(std::span<const MatrixNorms> layers, std::size_t n) {
  require(!layers.empty(), ErrorKind::config, "bound needs at least one layer");
  require(n >= 1, ErrorKind::config, "bound needs n >= 1");
  double log_prod = 0.0, sum_srank = 0.0;
  for (const auto& l : layers) {
    require(l.spectral_norm > 0.0, ErrorKind::undefined, "bound undefined for a zero weight matrix");
    log_prod += 2.0 * std::log(l.spectral_norm);
    sum_srank += l.stable_rank;
  }
  return std::exp(0.5 * (log_prod + std::log(sum_srank) - std::log(static_cast<double>(n))));
}

inline double generalization_bound(const std::vector<Eigen::MatrixXd>& layers, std::size_t n,
                                   const PowerIterationConfig& cfg = {}) {
  std::vector<MatrixNorms> norms;
  for (const auto& w : layers) {
    MatrixNorms mn;
    const auto r = spectral_norm(w, cfg);
    mn.spectral_norm = r.value;
    mn.frobenius_norm = w.norm();
    mn.stable_rank = stable_rank(mn.frobenius_norm, mn.spectral_norm);
    norms.push_back(mn);
  }
  return generalization_bound(norms, n);
}

struct NormReport {
  std::vector<MatrixNorms> layers;  // network order: encoders, then decoders
  double bound = 0.0;
  std::size_t n = 0;
  std::optional<std::size_t> epoch;
  bool all_converged = true;
  std::string manifest_id;

  const MatrixNorms& encoder(std::size_t l = 0) const { return layers.at(l); }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["n"] = n;
    if (epoch) j["epoch"] = *epoch;
    j["bound"] = bound;
    j["bound_note"] = "constant factors dropped; compare across models only";
    j["all_converged"] = all_converged;
    if (!manifest_id.empty()) j["manifest"] = manifest_id;
    j["layers"] = nlohmann::json::array();
    for (const auto& l : layers)
      j["layers"].push_back({{"name", l.name},
                             {"rows", l.rows},
                             {"cols", l.cols},
                             {"spectral_norm", l.spectral_norm},
                             {"frobenius_norm", l.frobenius_norm},
                             {"stable_rank", l.stable_rank},
                             {"converged", l.converged}});
    return j;
  }
};

/// Norms of every weight matrix of the network (encoders W_1..W_d, then
/// decoders W'_d..W'_1) and the bound over all of them. `n` is the number of
/// training users.
template <class T>
NormReport diagnose(const SwDae<T>& model, std::size_t n, const PowerIterationConfig& cfg = {}) {
  NormReport rep;
  rep.n = n;
  rep.manifest_id = model.manifest_id;
  auto add = [&](const std::string& name, const BipartitePattern& p, const std::vector<T>& w) {
    MatrixNorms mn;
    mn.name = name;
    mn.rows = p.cols();  // neurons x inputs orientation
    mn.cols = p.rows();
    const auto r = spectral_norm<T>(p, w, cfg);
    mn.spectral_norm = r.value;
    mn.converged = r.converged;
    mn.frobenius_norm = frobenius_norm<T>(w);
    mn.stable_rank = stable_rank(mn.frobenius_norm, mn.spectral_norm);
    rep.all_converged = rep.all_converged && r.converged;
    rep.layers.push_back(mn);
  };
  for (std::size_t l = 0; l < model.depth(); ++l)
    add("encoder" + std::to_string(l + 1), *model.layers[l].encoder, model.layers[l].W);
  for (std::size_t l = model.depth(); l-- > 0;)
    add("decoder" + std::to_string(l + 1), *model.layers[l].decoder, model.layers[l].W_prime);
  rep.bound = generalization_bound(rep.layers, n);
  return rep;
}

}  // namespace swrec
