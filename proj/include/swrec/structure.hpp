#pragma once

// Connectivity masks: one hidden neuron per cluster, wired to exactly the
// items of that cluster. The decoder uses the transposed pattern.

#include <algorithm>
#include <map>
#include <span>
#include <vector>

#include "swrec/core.hpp"
#include "swrec/grouping.hpp"

namespace swrec {

/// Sparse boolean rows x cols pattern stored row-major (input-major), with a
/// column-major view that maps back to row-major positions. Weight arrays are
/// aligned with the row-major positions.
class BipartitePattern {
 public:
  BipartitePattern() = default;

  /// `rows_cols[r]` lists the columns set in row r; they are sorted and must
  /// be distinct and < cols.
  static BipartitePattern from_rows(std::size_t cols, const std::vector<std::vector<index_t>>& rows_cols) {
    BipartitePattern p;
    p.rows_ = rows_cols.size();
    p.cols_ = cols;
    p.row_ptr_.assign(1, 0);
    for (const auto& r : rows_cols) {
      std::vector<index_t> s = r;
      std::sort(s.begin(), s.end());
      for (std::size_t k = 0; k < s.size(); ++k) {
        require(s[k] < cols, ErrorKind::integrity,
                "connection to column " + std::to_string(s[k]) + " outside [0, " + std::to_string(cols) + ")");
        require(k == 0 || s[k] != s[k - 1], ErrorKind::integrity, "duplicate connection in pattern row");
      }
      p.col_.insert(p.col_.end(), s.begin(), s.end());
      p.row_ptr_.push_back(p.col_.size());
    }
    p.build_transpose();
    return p;
  }

  static BipartitePattern from_csr(std::size_t rows, std::size_t cols, std::vector<std::uint64_t> row_ptr,
                                   std::vector<index_t> col) {
    require(row_ptr.size() == rows + 1 && row_ptr.front() == 0 && row_ptr.back() == col.size(), ErrorKind::integrity,
            "malformed pattern row pointer");
    std::vector<std::vector<index_t>> r(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      require(row_ptr[i] <= row_ptr[i + 1], ErrorKind::integrity, "row pointer not monotone");
      r[i].assign(col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i]), col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i + 1]));
    }
    return from_rows(cols, r);
  }

  static BipartitePattern full(std::size_t rows, std::size_t cols) {
    std::vector<std::vector<index_t>> r(rows, std::vector<index_t>(cols));
    for (auto& v : r)
      for (std::size_t j = 0; j < cols; ++j) v[j] = static_cast<index_t>(j);
    return from_rows(cols, r);
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return col_.size(); }
  double density() const {
    return rows_ && cols_ ? static_cast<double>(nnz()) / (static_cast<double>(rows_) * static_cast<double>(cols_)) : 0.0;
  }

  const std::vector<std::uint64_t>& row_ptr() const { return row_ptr_; }
  const std::vector<index_t>& col() const { return col_; }
  std::span<const index_t> row(std::size_t r) const {
    return {col_.data() + row_ptr_[r], static_cast<std::size_t>(row_ptr_[r + 1] - row_ptr_[r])};
  }
  std::size_t row_degree(std::size_t r) const { return static_cast<std::size_t>(row_ptr_[r + 1] - row_ptr_[r]); }

  // Column-major view: for column c, entries t_ptr[c]..t_ptr[c+1] give the
  // row index and the position of that connection in row-major storage.
  const std::vector<std::uint64_t>& col_ptr() const { return t_ptr_; }
  const std::vector<index_t>& col_rows() const { return t_row_; }
  const std::vector<std::uint64_t>& col_pos() const { return t_pos_; }
  std::size_t col_degree(std::size_t c) const { return static_cast<std::size_t>(t_ptr_[c + 1] - t_ptr_[c]); }

  bool contains(std::size_t r, std::size_t c) const {
    const auto s = row(r);
    return std::binary_search(s.begin(), s.end(), static_cast<index_t>(c));
  }

  /// Row-major position of (r, c), or nnz() if absent.
  std::size_t position(std::size_t r, std::size_t c) const {
    const auto s = row(r);
    auto it = std::lower_bound(s.begin(), s.end(), static_cast<index_t>(c));
    if (it == s.end() || *it != c) return nnz();
    return static_cast<std::size_t>(row_ptr_[r]) + static_cast<std::size_t>(it - s.begin());
  }

  BipartitePattern transposed() const {
    std::vector<std::vector<index_t>> r(cols_);
    for (std::size_t c = 0; c < cols_; ++c)
      for (auto p = t_ptr_[c]; p < t_ptr_[c + 1]; ++p) r[c].push_back(t_row_[p]);
    return from_rows(rows_, r);
  }

  bool operator==(const BipartitePattern& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && row_ptr_ == o.row_ptr_ && col_ == o.col_;
  }

 private:
  void build_transpose() {
    t_ptr_.assign(cols_ + 1, 0);
    for (index_t c : col_) ++t_ptr_[c + 1];
    for (std::size_t c = 0; c < cols_; ++c) t_ptr_[c + 1] += t_ptr_[c];
    t_row_.resize(col_.size());
    t_pos_.resize(col_.size());
    auto fill = t_ptr_;
    for (std::size_t r = 0; r < rows_; ++r)
      for (auto p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) {
        const auto q = fill[col_[p]]++;
        t_row_[q] = static_cast<index_t>(r);
        t_pos_[q] = p;
      }
  }

  std::size_t rows_ = 0, cols_ = 0;
  std::vector<std::uint64_t> row_ptr_{0};
  std::vector<index_t> col_;
  std::vector<std::uint64_t> t_ptr_{0};
  std::vector<index_t> t_row_;
  std::vector<std::uint64_t> t_pos_;
};

/// Item x neuron mask built from overlapping clusters; every item row has
/// exactly R connections.
struct ConnectivityMask {
  BipartitePattern pattern;  // m x K
  std::size_t R = 0;

  std::size_t m() const { return pattern.rows(); }
  std::size_t K() const { return pattern.cols(); }
  double density() const { return pattern.density(); }
  std::size_t neuron_degree(std::size_t j) const { return pattern.col_degree(j); }

  /// Recover the per-item cluster assignments.
  OverlappingClusters to_clusters() const {
    OverlappingClusters c;
    c.m = m();
    c.K = K();
    c.R = R;
    c.members = pattern.col();
    c.refresh_empty();
    return c;
  }
};

inline ConnectivityMask build_mask(const OverlappingClusters& clusters, std::size_t m) {
  require(clusters.m == m, ErrorKind::integrity,
          "clusters cover " + std::to_string(clusters.m) + " items, expected " + std::to_string(m));
  require(clusters.members.size() == m * clusters.R, ErrorKind::integrity, "assignment array has the wrong length");
  std::vector<std::vector<index_t>> rows(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto a = clusters.of(i);
    for (index_t c : a)
      require(c < clusters.K, ErrorKind::integrity,
              "item " + std::to_string(i) + " assigned to cluster " + std::to_string(c) + " >= K=" + std::to_string(clusters.K));
    rows[i].assign(a.begin(), a.end());
  }
  ConnectivityMask mask;
  mask.pattern = BipartitePattern::from_rows(clusters.K, rows);
  mask.R = clusters.R;
  return mask;
}

/// Size accounting for an autoencoder with encoder pattern `enc` and decoder
/// pattern `dec`. `weights` counts connections only; `parameters` adds the
/// hidden and output biases. A multiply-add is counted as two flops.
struct ParameterCount {
  std::uint64_t weights = 0;
  std::uint64_t parameters = 0;
  std::uint64_t flops_per_example = 0;
};

inline ParameterCount count_parameters(std::uint64_t encoder_nnz, std::uint64_t decoder_nnz, std::uint64_t m,
                                       std::uint64_t K) {
  ParameterCount c;
  c.weights = encoder_nnz + decoder_nnz;
  c.parameters = c.weights + K + m;
  c.flops_per_example = 2 * c.weights;
  return c;
}

inline ParameterCount count_parameters(const ConnectivityMask& mask) {
  return count_parameters(mask.pattern.nnz(), mask.pattern.nnz(), mask.m(), mask.K());
}

/// Regular mask with R connections per item, from closed-form sizes.
inline ParameterCount count_parameters(std::uint64_t m, std::uint64_t K, std::uint64_t R) {
  return count_parameters(m * R, m * R, m, K);
}

/// Histogram of neuron degrees: degree -> number of neurons.
inline std::map<std::size_t, std::size_t> neuron_degree_histogram(const BipartitePattern& p) {
  std::map<std::size_t, std::size_t> h;
  for (std::size_t c = 0; c < p.cols(); ++c) ++h[p.col_degree(c)];
  return h;
}

}  // namespace swrec
