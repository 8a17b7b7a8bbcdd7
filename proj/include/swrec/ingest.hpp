#pragma once

// Raw event loading, binarization, count filtering and strong-generalization
// user splits.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "swrec/core.hpp"

namespace swrec {

struct InteractionEvent {
  std::string user_id;
  std::string item_id;
  double value = 1.0;
  std::optional<std::int64_t> timestamp;
};

enum class InputFormat { csv, tsv };

inline InputFormat parse_input_format(std::string_view s) {
  if (s == "csv") return InputFormat::csv;
  if (s == "tsv") return InputFormat::tsv;
  throw Error(ErrorKind::config, "unknown input format '" + std::string(s) + "'");
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return fields;
}

/// Natural order for id tokens: numeric tokens by value, then everything else
/// lexicographically. Used to assign dense indices independent of input order.
inline bool natural_less(const std::string& a, const std::string& b) {
  auto numeric = [](const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  };
  const bool na = numeric(a), nb = numeric(b);
  if (na != nb) return na;
  if (na && a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

}  // namespace detail

/// Parse headerless `user<d>item<d>value[<d>timestamp]` records. Events with
/// value below `binarize_threshold` are dropped; order is preserved.
inline std::vector<InteractionEvent> parse_events(std::istream& in, InputFormat format,
                                                  double binarize_threshold) {
  const char delim = format == InputFormat::csv ? ',' : '\t';
  std::vector<InteractionEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    const auto fields = detail::split_fields(view, delim);
    auto fail = [&](const std::string& why) {
      throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + ": " + why);
    };
    if (fields.size() < 3 || fields.size() > 4) fail("expected 3 or 4 fields, got " + std::to_string(fields.size()));
    if (fields[0].empty() || fields[1].empty()) fail("empty user or item id");
    double value = 0.0;
    {
      const auto f = fields[2];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), value);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size() || !std::isfinite(value))
        fail("bad value '" + std::string(f) + "'");
    }
    InteractionEvent ev{std::string(fields[0]), std::string(fields[1]), value, std::nullopt};
    if (fields.size() == 4 && !fields[3].empty()) {
      std::int64_t ts = 0;
      const auto f = fields[3];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), ts);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size()) fail("bad timestamp '" + std::string(f) + "'");
      ev.timestamp = ts;
    }
    if (value >= binarize_threshold) events.push_back(std::move(ev));
  }
  return events;
}

inline std::vector<InteractionEvent> load_events(const std::string& path, InputFormat format,
                                                 double binarize_threshold) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  return parse_events(in, format, binarize_threshold);
}

/// Binary user x item occupancy in CSR form (rows = users, sorted item lists)
/// plus the token maps in both directions.
class InteractionMatrix {
 public:
  InteractionMatrix() : row_ptr_{0} {}

  /// Build from per-user item lists. Lists are sorted and deduplicated;
  /// ids default to the decimal index.
  static InteractionMatrix from_rows(std::size_t m, std::vector<std::vector<index_t>> rows,
                                     std::vector<std::string> user_ids = {},
                                     std::vector<std::string> item_ids = {}) {
    InteractionMatrix x;
    x.m_ = m;
    x.row_ptr_.assign(1, 0);
    x.row_ptr_.reserve(rows.size() + 1);
    for (auto& r : rows) {
      std::sort(r.begin(), r.end());
      r.erase(std::unique(r.begin(), r.end()), r.end());
      for (index_t i : r) {
        require(i < m, ErrorKind::integrity, "item index " + std::to_string(i) + " out of range");
        x.col_idx_.push_back(i);
      }
      x.row_ptr_.push_back(x.col_idx_.size());
    }
    if (user_ids.empty())
      for (std::size_t u = 0; u < rows.size(); ++u) user_ids.push_back(std::to_string(u));
    if (item_ids.empty())
      for (std::size_t i = 0; i < m; ++i) item_ids.push_back(std::to_string(i));
    require(user_ids.size() == rows.size() && item_ids.size() == m, ErrorKind::integrity,
            "id map sizes do not match matrix shape");
    x.set_ids(std::move(user_ids), std::move(item_ids));
    return x;
  }

  static InteractionMatrix from_csr(std::size_t m, std::vector<std::uint64_t> row_ptr,
                                    std::vector<index_t> col_idx, std::vector<std::string> user_ids,
                                    std::vector<std::string> item_ids) {
    require(!row_ptr.empty() && row_ptr.front() == 0 && row_ptr.back() == col_idx.size(),
            ErrorKind::integrity, "malformed row pointer array");
    const std::size_t n = row_ptr.size() - 1;
    for (std::size_t u = 0; u < n; ++u) {
      require(row_ptr[u] <= row_ptr[u + 1], ErrorKind::integrity, "row pointers not monotone");
      for (auto p = row_ptr[u]; p < row_ptr[u + 1]; ++p) {
        require(col_idx[p] < m, ErrorKind::integrity, "column index out of range");
        if (p > row_ptr[u]) require(col_idx[p - 1] < col_idx[p], ErrorKind::integrity, "row not strictly sorted");
      }
    }
    require(user_ids.size() == n && item_ids.size() == m, ErrorKind::integrity,
            "id map sizes do not match matrix shape");
    InteractionMatrix x;
    x.m_ = m;
    x.row_ptr_ = std::move(row_ptr);
    x.col_idx_ = std::move(col_idx);
    x.set_ids(std::move(user_ids), std::move(item_ids));
    return x;
  }

  std::size_t n() const { return row_ptr_.size() - 1; }
  std::size_t m() const { return m_; }
  std::size_t nnz() const { return col_idx_.size(); }

  std::span<const index_t> row(std::size_t u) const {
    return {col_idx_.data() + row_ptr_[u], col_idx_.data() + row_ptr_[u + 1]};
  }
  std::size_t row_size(std::size_t u) const { return row_ptr_[u + 1] - row_ptr_[u]; }

  bool contains(std::size_t u, index_t i) const {
    const auto r = row(u);
    return std::binary_search(r.begin(), r.end(), i);
  }

  const std::vector<std::uint64_t>& row_ptr() const { return row_ptr_; }
  const std::vector<index_t>& col_idx() const { return col_idx_; }
  const std::vector<std::string>& user_ids() const { return user_ids_; }
  const std::vector<std::string>& item_ids() const { return item_ids_; }

  std::optional<index_t> user_index(const std::string& token) const {
    auto it = user_index_.find(token);
    if (it == user_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<index_t> item_index(const std::string& token) const {
    auto it = item_index_.find(token);
    if (it == item_index_.end()) return std::nullopt;
    return it->second;
  }

  /// Number of users consuming each item.
  std::vector<std::uint64_t> item_counts() const {
    std::vector<std::uint64_t> c(m_, 0);
    for (index_t i : col_idx_) ++c[i];
    return c;
  }

  /// Events in row order, one per occupied cell (value 1).
  std::vector<InteractionEvent> to_events() const {
    std::vector<InteractionEvent> out;
    out.reserve(nnz());
    for (std::size_t u = 0; u < n(); ++u)
      for (index_t i : row(u)) out.push_back({user_ids_[u], item_ids_[i], 1.0, std::nullopt});
    return out;
  }

  bool operator==(const InteractionMatrix& o) const {
    return m_ == o.m_ && row_ptr_ == o.row_ptr_ && col_idx_ == o.col_idx_ && user_ids_ == o.user_ids_ &&
           item_ids_ == o.item_ids_;
  }

 private:
  void set_ids(std::vector<std::string> users, std::vector<std::string> items) {
    user_ids_ = std::move(users);
    item_ids_ = std::move(items);
    user_index_.clear();
    item_index_.clear();
    for (std::size_t u = 0; u < user_ids_.size(); ++u) user_index_.emplace(user_ids_[u], static_cast<index_t>(u));
    for (std::size_t i = 0; i < item_ids_.size(); ++i) item_index_.emplace(item_ids_[i], static_cast<index_t>(i));
    require(user_index_.size() == user_ids_.size() && item_index_.size() == item_ids_.size(),
            ErrorKind::integrity, "duplicate id tokens");
  }

  std::size_t m_ = 0;
  std::vector<std::uint64_t> row_ptr_;
  std::vector<index_t> col_idx_;
  std::vector<std::string> user_ids_, item_ids_;
  std::unordered_map<std::string, index_t> user_index_, item_index_;
};

/// Deduplicate (user,item) pairs, then apply the user-count and item-count
/// filters alternately until neither removes anything.
inline InteractionMatrix build_matrix(const std::vector<InteractionEvent>& events, std::size_t min_user_events,
                                      std::size_t min_item_users) {
  require(!events.empty(), ErrorKind::empty_dataset, "no events to build a matrix from");

  std::unordered_map<std::string, index_t> user_tok, item_tok;
  std::vector<std::string> users, items;
  std::vector<std::pair<index_t, index_t>> pairs;
  pairs.reserve(events.size());
  for (const auto& ev : events) {
    require(!ev.user_id.empty() && !ev.item_id.empty(), ErrorKind::parse, "event with empty id");
    auto [uit, unew] = user_tok.emplace(ev.user_id, static_cast<index_t>(users.size()));
    if (unew) users.push_back(ev.user_id);
    auto [iit, inew] = item_tok.emplace(ev.item_id, static_cast<index_t>(items.size()));
    if (inew) items.push_back(ev.item_id);
    pairs.emplace_back(uit->second, iit->second);
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  std::vector<char> user_alive(users.size(), 1), item_alive(items.size(), 1);
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<std::size_t> ucount(users.size(), 0), icount(items.size(), 0);
    for (auto [u, i] : pairs)
      if (user_alive[u] && item_alive[i]) ++ucount[u];
    for (std::size_t u = 0; u < users.size(); ++u)
      if (user_alive[u] && (ucount[u] < min_user_events || ucount[u] == 0)) {
        user_alive[u] = 0;
        changed = true;
      }
    for (auto [u, i] : pairs)
      if (user_alive[u] && item_alive[i]) ++icount[i];
    for (std::size_t i = 0; i < items.size(); ++i)
      if (item_alive[i] && (icount[i] < min_item_users || icount[i] == 0)) {
        item_alive[i] = 0;
        changed = true;
      }
  }

  auto dense_order = [](const std::vector<std::string>& toks, const std::vector<char>& alive) {
    std::vector<index_t> keep;
    for (std::size_t k = 0; k < toks.size(); ++k)
      if (alive[k]) keep.push_back(static_cast<index_t>(k));
    std::sort(keep.begin(), keep.end(),
              [&](index_t a, index_t b) { return detail::natural_less(toks[a], toks[b]); });
    return keep;
  };
  const auto user_order = dense_order(users, user_alive);
  const auto item_order = dense_order(items, item_alive);
  require(!user_order.empty() && !item_order.empty(), ErrorKind::empty_dataset,
          "all events removed by the count filters");

  constexpr index_t none = std::numeric_limits<index_t>::max();
  std::vector<index_t> user_map(users.size(), none), item_map(items.size(), none);
  std::vector<std::string> user_ids, item_ids;
  for (std::size_t k = 0; k < user_order.size(); ++k) {
    user_map[user_order[k]] = static_cast<index_t>(k);
    user_ids.push_back(users[user_order[k]]);
  }
  for (std::size_t k = 0; k < item_order.size(); ++k) {
    item_map[item_order[k]] = static_cast<index_t>(k);
    item_ids.push_back(items[item_order[k]]);
  }
  std::vector<std::vector<index_t>> rows(user_order.size());
  for (auto [u, i] : pairs)
    if (user_map[u] != none && item_map[i] != none) rows[user_map[u]].push_back(item_map[i]);
  const std::size_t m = item_ids.size();
  return InteractionMatrix::from_rows(m, std::move(rows), std::move(user_ids), std::move(item_ids));
}

// ---------------------------------------------------------------------------
// Strong-generalization split.

struct SplitSpec {
  std::vector<index_t> train_users, val_users, test_users;
  double fold_in_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct HeldOutUser {
  index_t user = 0;
  std::vector<index_t> fold_in;  // sorted
  std::vector<index_t> holdout;  // sorted, never empty
};

struct SplitResult {
  SplitSpec spec;
  std::vector<HeldOutUser> val;
  std::vector<HeldOutUser> test;
};

/// Number of items a held-out user with `k` interactions folds in.
inline std::size_t fold_in_size(std::size_t k, double fraction) {
  if (k < 2) return k;
  auto f = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(k) - 1e-9));
  return std::clamp<std::size_t>(f, 1, k - 1);
}

inline HeldOutUser partition_user(const InteractionMatrix& x, index_t user, double fraction, std::uint64_t seed) {
  const auto row = x.row(user);
  std::vector<index_t> items(row.begin(), row.end());
  Rng rng(derive_seed(seed, 0x5011u, user));
  rng.shuffle(items);
  const std::size_t f = fold_in_size(items.size(), fraction);
  HeldOutUser h;
  h.user = user;
  h.fold_in.assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(f));
  h.holdout.assign(items.begin() + static_cast<std::ptrdiff_t>(f), items.end());
  std::sort(h.fold_in.begin(), h.fold_in.end());
  std::sort(h.holdout.begin(), h.holdout.end());
  return h;
}

/// Random disjoint train/val/test users. Only users with at least two items
/// are eligible for val/test; everyone else trains.
inline SplitResult split_users(const InteractionMatrix& x, std::size_t n_val, std::size_t n_test,
                               double fold_in_fraction, std::uint64_t seed) {
  require(fold_in_fraction > 0.0 && fold_in_fraction < 1.0, ErrorKind::config,
          "fold_in_fraction must lie strictly between 0 and 1");
  require(n_val + n_test < x.n(), ErrorKind::config,
          "n_val + n_test must be smaller than the user count " + std::to_string(x.n()));
  auto order = iota_indices(x.n());
  Rng rng(derive_seed(seed, 0x5eedu));
  rng.shuffle(order);

  SplitResult out;
  out.spec.fold_in_fraction = fold_in_fraction;
  out.spec.seed = seed;
  for (index_t u : order) {
    const bool eligible = x.row_size(u) >= 2;
    if (eligible && out.spec.val_users.size() < n_val)
      out.spec.val_users.push_back(u);
    else if (eligible && out.spec.test_users.size() < n_test)
      out.spec.test_users.push_back(u);
    else
      out.spec.train_users.push_back(u);
  }
  require(out.spec.val_users.size() == n_val && out.spec.test_users.size() == n_test, ErrorKind::config,
          "not enough users with >= 2 items for the requested validation/test sizes");
  std::sort(out.spec.train_users.begin(), out.spec.train_users.end());
  std::sort(out.spec.val_users.begin(), out.spec.val_users.end());
  std::sort(out.spec.test_users.begin(), out.spec.test_users.end());
  for (index_t u : out.spec.val_users) out.val.push_back(partition_user(x, u, fold_in_fraction, seed));
  for (index_t u : out.spec.test_users) out.test.push_back(partition_user(x, u, fold_in_fraction, seed));
  return out;
}

}  // namespace swrec
