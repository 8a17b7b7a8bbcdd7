#pragma once

// Item co-occurrence graph Y = X^T X and its degree-normalized Laplacian
// D^{-1/2} Y D^{-1/2}.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <vector>

#include "swrec/core.hpp"
#include "swrec/ingest.hpp"

namespace swrec {

/// Symmetric sparse matrix stored with both triangles in CSR form.
struct SparseSymmetric {
  std::size_t dim = 0;
  std::vector<std::uint64_t> row_ptr{0};
  std::vector<index_t> col;
  std::vector<double> val;

  std::size_t nnz() const { return col.size(); }

  void apply(const double* x, double* y) const {
    for (std::size_t i = 0; i < dim; ++i) {
      double s = 0.0;
      for (auto p = row_ptr[i]; p < row_ptr[i + 1]; ++p) s += val[p] * x[col[p]];
      y[i] = s;
    }
  }

  double at(std::size_t i, std::size_t j) const {
    const auto* first = col.data() + row_ptr[i];
    const auto* last = col.data() + row_ptr[i + 1];
    const auto* it = std::lower_bound(first, last, static_cast<index_t>(j));
    return (it != last && *it == j) ? val[static_cast<std::size_t>(it - col.data())] : 0.0;
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (double v : val) s += v * v;
    return std::sqrt(s);
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < dim; ++i)
      for (auto p = row_ptr[i]; p < row_ptr[i + 1]; ++p)
        d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col[p])) = val[p];
    return d;
  }

  /// Dense (threshold = exact zero) to sparse; the input must be symmetric.
  static SparseSymmetric from_dense(const Eigen::MatrixXd& d) {
    SparseSymmetric s;
    s.dim = static_cast<std::size_t>(d.rows());
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
      for (Eigen::Index j = 0; j < d.cols(); ++j)
        if (d(i, j) != 0.0) {
          s.col.push_back(static_cast<index_t>(j));
          s.val.push_back(d(i, j));
        }
      s.row_ptr.push_back(s.col.size());
    }
    return s;
  }
};

/// Y = X^T X. Only the upper triangle (j >= i, diagonal included) is stored;
/// `at` mirrors the lower half.
class CooccurrenceGraph {
 public:
  std::size_t m() const { return m_; }

  std::uint64_t at(std::size_t i, std::size_t j) const {
    if (j < i) std::swap(i, j);
    const auto* first = col_.data() + row_ptr_[i];
    const auto* last = col_.data() + row_ptr_[i + 1];
    const auto* it = std::lower_bound(first, last, static_cast<index_t>(j));
    return (it != last && *it == j) ? count_[static_cast<std::size_t>(it - col_.data())] : 0;
  }

  /// |x_i|: number of users consuming item i.
  std::uint64_t popularity(std::size_t i) const { return at(i, i); }

  /// deg(v_i) = sum_j Y_ij.
  std::uint64_t degree(std::size_t i) const { return degrees_[i]; }
  const std::vector<std::uint64_t>& degrees() const { return degrees_; }

  /// Stored upper-triangle entries.
  std::size_t stored_entries() const { return col_.size(); }

  const std::vector<std::uint64_t>& upper_row_ptr() const { return row_ptr_; }
  const std::vector<index_t>& upper_col() const { return col_; }
  const std::vector<std::uint64_t>& upper_count() const { return count_; }

  /// Expand to a full symmetric matrix with real values.
  SparseSymmetric to_symmetric() const {
    return expand([](std::size_t, std::size_t, std::uint64_t c) { return static_cast<double>(c); });
  }

  template <class ValueFn>
  SparseSymmetric expand(ValueFn value) const {
    std::vector<std::vector<std::pair<index_t, double>>> rows(m_);
    for (std::size_t i = 0; i < m_; ++i)
      for (auto p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
        const std::size_t j = col_[p];
        const double v = value(i, j, count_[p]);
        rows[i].emplace_back(static_cast<index_t>(j), v);
        if (j != i) rows[j].emplace_back(static_cast<index_t>(i), v);
      }
    SparseSymmetric s;
    s.dim = m_;
    for (auto& r : rows) {
      std::sort(r.begin(), r.end());
      for (auto [j, v] : r) {
        s.col.push_back(j);
        s.val.push_back(v);
      }
      s.row_ptr.push_back(s.col.size());
    }
    return s;
  }

  friend CooccurrenceGraph build_cooccurrence(const InteractionMatrix& x);

 private:
  std::size_t m_ = 0;
  std::vector<std::uint64_t> row_ptr_{0};
  std::vector<index_t> col_;
  std::vector<std::uint64_t> count_;
  std::vector<std::uint64_t> degrees_;
};

/// Row-by-row sparse accumulation (Gustavson): for item i, walk the users of
/// i and count their items j >= i. Workspace is O(m), never m x m.
inline CooccurrenceGraph build_cooccurrence(const InteractionMatrix& x) {
  const std::size_t m = x.m();
  CooccurrenceGraph g;
  g.m_ = m;

  // Column view of X: item -> users.
  std::vector<std::uint64_t> cptr(m + 1, 0);
  for (index_t i : x.col_idx()) ++cptr[i + 1];
  for (std::size_t i = 0; i < m; ++i) cptr[i + 1] += cptr[i];
  std::vector<index_t> cusers(x.nnz());
  {
    auto fill = cptr;
    for (std::size_t u = 0; u < x.n(); ++u)
      for (index_t i : x.row(u)) cusers[fill[i]++] = static_cast<index_t>(u);
  }

  std::vector<std::uint64_t> acc(m, 0);
  std::vector<index_t> touched;
  g.row_ptr_.assign(1, 0);
  for (std::size_t i = 0; i < m; ++i) {
    touched.clear();
    for (auto p = cptr[i]; p < cptr[i + 1]; ++p) {
      const auto row = x.row(cusers[p]);
      auto it = std::lower_bound(row.begin(), row.end(), static_cast<index_t>(i));
      for (; it != row.end(); ++it) {
        if (acc[*it]++ == 0) touched.push_back(*it);
      }
    }
    std::sort(touched.begin(), touched.end());
    for (index_t j : touched) {
      g.col_.push_back(j);
      g.count_.push_back(acc[j]);
      acc[j] = 0;
    }
    g.row_ptr_.push_back(g.col_.size());
  }

  g.degrees_.assign(m, 0);
  for (std::size_t i = 0; i < m; ++i)
    for (auto p = g.row_ptr_[i]; p < g.row_ptr_[i + 1]; ++p) {
      g.degrees_[i] += g.count_[p];
      if (g.col_[p] != i) g.degrees_[g.col_[p]] += g.count_[p];
    }
  return g;
}

struct NormalizedLaplacian {
  SparseSymmetric matrix;
  std::vector<index_t> zero_degree_items;

  std::size_t m() const { return matrix.dim; }
};

/// Delta_ij = Y_ij / sqrt(deg_i deg_j); the diagonal reduces to |x_i| / deg_i.
/// Items with zero degree keep all-zero rows and columns.
inline NormalizedLaplacian build_laplacian(const CooccurrenceGraph& g) {
  NormalizedLaplacian lap;
  std::vector<double> inv_sqrt(g.m(), 0.0);
  for (std::size_t i = 0; i < g.m(); ++i) {
    if (g.degree(i) == 0)
      lap.zero_degree_items.push_back(static_cast<index_t>(i));
    else
      inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(g.degree(i)));
  }
  // Each off-diagonal value is computed once from the upper triangle and
  // mirrored, so the result is exactly symmetric.
  lap.matrix = g.expand([&](std::size_t i, std::size_t j, std::uint64_t c) {
    if (i == j) return static_cast<double>(c) / static_cast<double>(g.degree(i));
    return static_cast<double>(c) * inv_sqrt[i] * inv_sqrt[j];
  });
  return lap;
}

/// Laplacian of a real-valued Gram matrix Y = H^T H (used when the observed
/// variables are hidden activations rather than binary items).
inline NormalizedLaplacian laplacian_from_gram(const Eigen::MatrixXd& gram) {
  require(gram.rows() == gram.cols(), ErrorKind::integrity, "Gram matrix must be square");
  const Eigen::Index m = gram.rows();
  Eigen::VectorXd deg = gram.rowwise().sum();
  NormalizedLaplacian lap;
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(m, m);
  std::vector<double> inv_sqrt(static_cast<std::size_t>(m), 0.0);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(deg(i) > 0.0))
      lap.zero_degree_items.push_back(static_cast<index_t>(i));
    else
      inv_sqrt[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(deg(i));
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    if (inv_sqrt[static_cast<std::size_t>(i)] == 0.0) continue;
    d(i, i) = gram(i, i) / deg(i);
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const double v = gram(i, j) * inv_sqrt[static_cast<std::size_t>(i)] * inv_sqrt[static_cast<std::size_t>(j)];
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  lap.matrix = SparseSymmetric::from_dense(d);
  return lap;
}

/// Plain-text sparse triplets: a header line `rows cols nnz` followed by one
/// `row col value` line per stored entry (0-based, row-major order).
inline void write_triplets(std::ostream& out, const SparseSymmetric& s) {
  out << s.dim << ' ' << s.dim << ' ' << s.nnz() << '\n';
  char buf[64];
  for (std::size_t i = 0; i < s.dim; ++i)
    for (auto p = s.row_ptr[i]; p < s.row_ptr[i + 1]; ++p) {
      std::snprintf(buf, sizeof buf, "%.17g", s.val[p]);
      out << i << ' ' << s.col[p] << ' ' << buf << '\n';
    }
}

}  // namespace swrec
