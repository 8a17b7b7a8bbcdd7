#pragma once

// Top-N ranking evaluation for held-out users: Recall@R and NDCG@R.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "swrec/core.hpp"
#include "swrec/ingest.hpp"
#include "swrec/swdae.hpp"

namespace swrec {

struct RankedList {
  index_t user = 0;
  std::vector<index_t> ordering;  // best first, fold-in items excluded
  std::vector<double> scores;     // aligned with ordering
};

/// Decoder logits of a clean forward pass on the binary fold-in vector.
template <class T>
std::vector<double> score_user(const SwDae<T>& model, std::span<const index_t> fold_in) {
  Workspace<T> ws(model);
  std::fill(ws.e[0].begin(), ws.e[0].end(), T(0));
  for (index_t i : fold_in) ws.e[0][i] = T(1);
  forward(model, ws);
  return {ws.logits.begin(), ws.logits.end()};
}

/// Rank the items not in `exclude` by descending score and keep the first
/// `depth`. Ties are broken by a per-user seeded random permutation, so a
/// constant scorer yields a uniformly random order rather than index order.
inline RankedList rank_items(index_t user, std::span<const double> scores, std::span<const index_t> exclude,
                             std::size_t depth, std::uint64_t tie_seed) {
  const std::size_t m = scores.size();
  std::vector<index_t> perm = iota_indices(m);
  Rng rng(derive_seed(tie_seed, 0x7135u, user));
  rng.shuffle(perm);
  std::vector<index_t> tie_rank(m);
  for (std::size_t r = 0; r < m; ++r) tie_rank[perm[r]] = static_cast<index_t>(r);

  std::vector<char> excluded(m, 0);
  for (index_t i : exclude) excluded[i] = 1;
  std::vector<index_t> cand;
  cand.reserve(m);
  for (std::size_t i = 0; i < m; ++i)
    if (!excluded[i]) cand.push_back(static_cast<index_t>(i));
  auto better = [&](index_t a, index_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return tie_rank[a] < tie_rank[b];
  };
  const std::size_t k = std::min(depth, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(), better);
  cand.resize(k);
  RankedList out;
  out.user = user;
  out.ordering = std::move(cand);
  out.scores.reserve(k);
  for (index_t i : out.ordering) out.scores.push_back(scores[i]);
  return out;
}

namespace detail {
inline void require_holdout(std::span<const index_t> holdout, std::size_t cutoff) {
  require(cutoff >= 1, ErrorKind::config, "cutoff must be >= 1");
  require(!holdout.empty(), ErrorKind::undefined, "metric undefined for a user with an empty holdout set");
}
inline bool in_sorted(std::span<const index_t> set, index_t v) { return std::binary_search(set.begin(), set.end(), v); }
}  // namespace detail

/// Hits in the first `cutoff` positions over min(cutoff, |holdout|).
/// `holdout` must be sorted.
inline double recall_at(const RankedList& ranked, std::span<const index_t> holdout, std::size_t cutoff) {
  detail::require_holdout(holdout, cutoff);
  const std::size_t k = std::min(cutoff, ranked.ordering.size());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < k; ++r) hits += detail::in_sorted(holdout, ranked.ordering[r]);
  return static_cast<double>(hits) / static_cast<double>(std::min(cutoff, holdout.size()));
}

/// DCG with 1/log2(rank + 1) gains over the ideal DCG. `holdout` must be
/// sorted.
inline double ndcg_at(const RankedList& ranked, std::span<const index_t> holdout, std::size_t cutoff) {
  detail::require_holdout(holdout, cutoff);
  const std::size_t k = std::min(cutoff, ranked.ordering.size());
  double dcg = 0.0;
  for (std::size_t r = 0; r < k; ++r)
    if (detail::in_sorted(holdout, ranked.ordering[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  double idcg = 0.0;
  const std::size_t ideal = std::min(cutoff, holdout.size());
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return dcg / idcg;
}

struct UserMetrics {
  index_t user = 0;
  std::size_t fold_in_size = 0;
  std::size_t holdout_size = 0;
  std::vector<double> recall;  // aligned with EvalReport::cutoffs
  std::vector<double> ndcg;
};

struct EvalReport {
  std::vector<std::size_t> cutoffs{20, 50, 100};
  std::vector<UserMetrics> users;
  std::vector<double> mean_recall;
  std::vector<double> mean_ndcg;
  std::uint64_t tie_seed = 0;
  std::string cold_start = "none";
  std::string manifest_id;

  std::size_t user_count() const { return users.size(); }

  double recall(std::size_t cutoff) const { return mean_recall.at(index_of(cutoff)); }
  double ndcg(std::size_t cutoff) const { return mean_ndcg.at(index_of(cutoff)); }

  std::size_t index_of(std::size_t cutoff) const {
    auto it = std::find(cutoffs.begin(), cutoffs.end(), cutoff);
    require(it != cutoffs.end(), ErrorKind::config, "cutoff " + std::to_string(cutoff) + " was not evaluated");
    return static_cast<std::size_t>(it - cutoffs.begin());
  }

  nlohmann::json to_json(bool per_user = true) const {
    nlohmann::json j;
    j["cutoffs"] = cutoffs;
    j["user_count"] = users.size();
    j["tie_seed"] = tie_seed;
    j["cold_start"] = cold_start;
    if (!manifest_id.empty()) j["manifest"] = manifest_id;
    nlohmann::json mean;
    for (std::size_t c = 0; c < cutoffs.size(); ++c) {
      mean["recall@" + std::to_string(cutoffs[c])] = mean_recall[c];
      mean["ndcg@" + std::to_string(cutoffs[c])] = mean_ndcg[c];
    }
    j["mean"] = mean;
    if (per_user) {
      j["per_user"] = nlohmann::json::array();
      for (const auto& u : users)
        j["per_user"].push_back({{"user", u.user},
                                 {"fold_in", u.fold_in_size},
                                 {"holdout", u.holdout_size},
                                 {"recall", u.recall},
                                 {"ndcg", u.ndcg}});
    }
    return j;
  }
};

/// Evaluate an arbitrary scorer: `score(user)` returns one score per item.
inline EvalReport evaluate_scores(const std::function<std::vector<double>(const HeldOutUser&)>& score,
                                  std::span<const HeldOutUser> users, std::vector<std::size_t> cutoffs,
                                  std::uint64_t tie_seed) {
  require(!cutoffs.empty(), ErrorKind::config, "at least one cutoff is required");
  for (std::size_t c : cutoffs) require(c >= 1, ErrorKind::config, "cutoffs must be >= 1");
  std::sort(cutoffs.begin(), cutoffs.end());
  cutoffs.erase(std::unique(cutoffs.begin(), cutoffs.end()), cutoffs.end());
  EvalReport rep;
  rep.cutoffs = cutoffs;
  rep.tie_seed = tie_seed;
  rep.mean_recall.assign(cutoffs.size(), 0.0);
  rep.mean_ndcg.assign(cutoffs.size(), 0.0);
  const std::size_t depth = cutoffs.back();
  for (const HeldOutUser& h : users) {
    const std::vector<double> s = score(h);
    const RankedList r = rank_items(h.user, s, h.fold_in, depth, tie_seed);
    UserMetrics um;
    um.user = h.user;
    um.fold_in_size = h.fold_in.size();
    um.holdout_size = h.holdout.size();
    for (std::size_t c : cutoffs) {
      um.recall.push_back(recall_at(r, h.holdout, c));
      um.ndcg.push_back(ndcg_at(r, h.holdout, c));
    }
    rep.users.push_back(std::move(um));
  }
  require(!rep.users.empty(), ErrorKind::empty_dataset, "no users to evaluate");
  for (const auto& u : rep.users)
    for (std::size_t c = 0; c < cutoffs.size(); ++c) {
      rep.mean_recall[c] += u.recall[c];
      rep.mean_ndcg[c] += u.ndcg[c];
    }
  for (std::size_t c = 0; c < cutoffs.size(); ++c) {
    rep.mean_recall[c] /= static_cast<double>(rep.users.size());
    rep.mean_ndcg[c] /= static_cast<double>(rep.users.size());
  }
  return rep;
}

template <class T>
EvalReport evaluate(const SwDae<T>& model, std::span<const HeldOutUser> users,
                    std::vector<std::size_t> cutoffs = {20, 50, 100}, std::uint64_t tie_seed = 0) {
  Workspace<T> ws(model);
  auto score = [&](const HeldOutUser& h) {
    std::fill(ws.e[0].begin(), ws.e[0].end(), T(0));
    for (index_t i : h.fold_in) ws.e[0][i] = T(1);
    forward(model, ws);
    return std::vector<double>(ws.logits.begin(), ws.logits.end());
  };
  return evaluate_scores(score, users, std::move(cutoffs), tie_seed);
}

struct ColdStartFilter {
  enum class Mode { none, count_at_most, bottom_quantile } mode = Mode::none;
  std::size_t k = std::numeric_limits<std::size_t>::max();
  double q = 1.0;

  static ColdStartFilter count_at_most(std::size_t k) { return {Mode::count_at_most, k, 1.0}; }
  static ColdStartFilter bottom_quantile(double q) { return {Mode::bottom_quantile, 0, q}; }

  std::string describe() const {
    switch (mode) {
      case Mode::count_at_most: return "fold_in_count<=" + std::to_string(k);
      case Mode::bottom_quantile: return "bottom_quantile=" + std::to_string(q);
      default: return "none";
    }
  }
};

/// Users selected by fold-in activity. The quantile mode keeps the
/// ceil(q * N) users with the smallest fold-in sets, ties by user index.
inline std::vector<HeldOutUser> cold_start_filter(std::span<const HeldOutUser> users, const ColdStartFilter& f) {
  std::vector<HeldOutUser> out;
  switch (f.mode) {
    case ColdStartFilter::Mode::none: out.assign(users.begin(), users.end()); break;
    case ColdStartFilter::Mode::count_at_most:
      for (const auto& u : users)
        if (u.fold_in.size() <= f.k) out.push_back(u);
      break;
    case ColdStartFilter::Mode::bottom_quantile: {
      require(f.q > 0.0 && f.q <= 1.0, ErrorKind::config, "cold-start quantile must lie in (0, 1]");
      std::vector<const HeldOutUser*> sorted;
      for (const auto& u : users) sorted.push_back(&u);
      std::sort(sorted.begin(), sorted.end(), [](const HeldOutUser* a, const HeldOutUser* b) {
        if (a->fold_in.size() != b->fold_in.size()) return a->fold_in.size() < b->fold_in.size();
        return a->user < b->user;
      });
      const auto take = static_cast<std::size_t>(std::ceil(f.q * static_cast<double>(sorted.size()) - 1e-9));
      for (std::size_t k = 0; k < std::min(take, sorted.size()); ++k) out.push_back(*sorted[k]);
      std::sort(out.begin(), out.end(), [](const HeldOutUser& a, const HeldOutUser& b) { return a.user < b.user; });
      break;
    }
  }
  require(!out.empty(), ErrorKind::config, "cold-start filter " + f.describe() + " selects no users");
  return out;
}

}  // namespace swrec
