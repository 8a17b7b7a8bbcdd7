#include <gtest/gtest.h>

#include <set>

#include "support.hpp"

using namespace swrec;

namespace {

RankedList ranked(std::vector<index_t> order) {
  RankedList r;
  r.ordering = std::move(order);
  r.scores.assign(r.ordering.size(), 0.0);
  return r;
}

/// Independent reference: position lookup through a map, natural log ratio.
double reference_ndcg(const std::vector<index_t>& order, const std::set<index_t>& rel, std::size_t cutoff) {
  double dcg = 0.0, idcg = 0.0;
  for (std::size_t r = 0; r < std::min(cutoff, order.size()); ++r)
    if (rel.count(order[r])) dcg += std::log(2.0) / std::log(static_cast<double>(r + 2));
  for (std::size_t r = 0; r < std::min(cutoff, rel.size()); ++r) idcg += std::log(2.0) / std::log(static_cast<double>(r + 2));
  return dcg / idcg;
}

std::vector<HeldOutUser> users_with_fold_in_sizes(const std::vector<std::size_t>& sizes) {
  std::vector<HeldOutUser> out;
  for (std::size_t u = 0; u < sizes.size(); ++u) {
    HeldOutUser h;
    h.user = static_cast<index_t>(u);
    for (std::size_t k = 0; k < sizes[u]; ++k) h.fold_in.push_back(static_cast<index_t>(k));
    h.holdout = {static_cast<index_t>(sizes[u])};
    out.push_back(h);
  }
  return out;
}

}  // namespace

TEST(Recall, AllHoldoutInTopCutoff) {
  const auto r = ranked({4, 9, 1, 7, 3});
  const std::vector<index_t> holdout = {1, 4, 9};
  EXPECT_EQ(recall_at(r, holdout, 20), 1.0);
  EXPECT_EQ(recall_at(r, std::vector<index_t>{11, 12}, 5), 0.0);
}

TEST(Recall, PartialHitsAgainstShuffledOracle) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<index_t> order(40);
    std::iota(order.begin(), order.end(), index_t{0});
    std::shuffle(order.begin(), order.end(), gen);
    std::vector<index_t> holdout(order.begin(), order.begin() + 10);
    std::shuffle(holdout.begin(), holdout.end(), gen);
    std::sort(holdout.begin(), holdout.end());
    std::shuffle(order.begin(), order.end(), gen);
    int hits = 0;
    for (std::size_t r = 0; r < 5; ++r) hits += std::binary_search(holdout.begin(), holdout.end(), order[r]);
    EXPECT_DOUBLE_EQ(recall_at(ranked(order), holdout, 5), hits / 5.0);
  }
  // The worked case: 2 of 5 slots hit with 10 relevant items.
  EXPECT_DOUBLE_EQ(recall_at(ranked({0, 50, 1, 51, 52}), std::vector<index_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, 5), 0.4);
}

TEST(Ndcg, KnownValues) {
  EXPECT_DOUBLE_EQ(ndcg_at(ranked({3, 1, 2}), std::vector<index_t>{3}, 3), 1.0);
  EXPECT_NEAR(ndcg_at(ranked({1, 3}), std::vector<index_t>{3}, 2), 1.0 / std::log2(3.0), 1e-15);
  EXPECT_NEAR(ndcg_at(ranked({1, 3}), std::vector<index_t>{3}, 2), 0.6309, 1e-4);
}

TEST(Ndcg, MatchesIndependentReference) {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<index_t> order(60);
    std::iota(order.begin(), order.end(), index_t{0});
    std::shuffle(order.begin(), order.end(), gen);
    std::set<index_t> rel;
    const std::size_t nrel = 1 + gen() % 15;
    while (rel.size() < nrel) rel.insert(static_cast<index_t>(gen() % 80));
    const std::vector<index_t> hv(rel.begin(), rel.end());
    for (std::size_t cutoff : {1, 5, 20, 100}) {
      EXPECT_NEAR(ndcg_at(ranked(order), hv, cutoff), reference_ndcg(order, rel, cutoff), 1e-12);
      const double rc = recall_at(ranked(order), hv, cutoff);
      EXPECT_GE(rc, 0.0);
      EXPECT_LE(rc, 1.0);
    }
  }
}

TEST(Metrics, EmptyHoldoutIsUndefined) {
  try {
    ndcg_at(ranked({1}), std::vector<index_t>{}, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::undefined);
  }
}

TEST(Ranking, FoldInExcludedAndTiesSeeded) {
  const std::vector<double> s = {5, 1, 5, 3, 5, 0};
  const std::vector<index_t> exclude = {0};
  const auto r = rank_items(7, s, exclude, 10, 1);
  EXPECT_EQ(r.ordering.size(), 5u);
  EXPECT_TRUE(std::find(r.ordering.begin(), r.ordering.end(), 0u) == r.ordering.end());
  EXPECT_EQ(std::set<index_t>(r.ordering.begin(), r.ordering.begin() + 2), (std::set<index_t>{2, 4}));
  EXPECT_EQ(r.ordering[2], 3u);
  // A constant scorer does not produce index order for every user.
  const std::vector<double> flat(30, 1.0);
  int identity = 0;
  for (index_t u = 0; u < 20; ++u) {
    const auto o = rank_items(u, flat, {}, 30, 5).ordering;
    identity += std::is_sorted(o.begin(), o.end());
  }
  EXPECT_LT(identity, 2);
  EXPECT_EQ(rank_items(3, flat, {}, 30, 5).ordering, rank_items(3, flat, {}, 30, 5).ordering);
}

TEST(Ranking, StrictlyMonotoneTransformLeavesMetricsUnchanged) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(80), e(80), a(80);
    for (std::size_t i = 0; i < 80; ++i) {
      s[i] = unif(gen);
      e[i] = std::exp(s[i]);
      a[i] = 3.0 * s[i] - 7.0;
    }
    const std::vector<index_t> exclude = {2, 9, 40};
    const std::vector<index_t> holdout = {1, 5, 17, 33, 62, 70};
    for (std::size_t c : {5, 20, 50}) {
      const auto base = rank_items(0, s, exclude, c, 4);
      for (const auto* t : {&e, &a}) {
        const auto r = rank_items(0, *t, exclude, c, 4);
        EXPECT_EQ(recall_at(r, holdout, c), recall_at(base, holdout, c));
        EXPECT_EQ(ndcg_at(r, holdout, c), ndcg_at(base, holdout, c));
      }
    }
  }
}

TEST(Ranking, RemovingIrrelevantItemBelowCutoffChangesNothing) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> s(50);
  for (auto& v : s) v = unif(gen);
  const std::vector<index_t> holdout = {3, 8, 21};
  const auto full = rank_items(0, s, {}, 50, 1);
  // The last-ranked non-relevant item.
  index_t drop = full.ordering.back();
  for (auto it = full.ordering.rbegin(); it != full.ordering.rend(); ++it)
    if (!std::binary_search(holdout.begin(), holdout.end(), *it)) {
      drop = *it;
      break;
    }
  const auto reduced = rank_items(0, s, std::vector<index_t>{drop}, 50, 1);
  EXPECT_EQ(ndcg_at(reduced, holdout, 10), ndcg_at(full, holdout, 10));
  EXPECT_EQ(recall_at(reduced, holdout, 10), recall_at(full, holdout, 10));
}

TEST(Evaluate, PerfectOracleScoresOne) {
  const auto x = swtest::random_matrix(200, 150, 0.1, 5);
  const auto split = split_users(x, 0, 50, 0.8, 3);
  auto oracle = [&](const HeldOutUser& h) {
    std::vector<double> s(150, 0.0);
    for (index_t i : h.holdout) s[i] = 1.0;
    return s;
  };
  const auto rep = evaluate_scores(oracle, split.test, {20, 50, 100}, 1);
  for (std::size_t c : {20, 50, 100}) {
    EXPECT_DOUBLE_EQ(rep.recall(c), 1.0);
    EXPECT_DOUBLE_EQ(rep.ndcg(c), 1.0);
  }
  EXPECT_EQ(rep.cutoffs, (std::vector<std::size_t>{20, 50, 100}));
  EXPECT_EQ(rep.to_json()["mean"].count("recall@50"), 1u);
}

TEST(Evaluate, ConstantScorerMatchesUniformNull) {
  // Each user: m = 1000 candidate items, 10 relevant. Under a uniformly random
  // ranking E[NDCG@100] = sum_{r<=100} (10/1000)/log2(r+1) / IDCG.
  const std::size_t m = 1000, rel = 10, users = 400;
  std::vector<HeldOutUser> hs;
  for (std::size_t u = 0; u < users; ++u) {
    HeldOutUser h;
    h.user = static_cast<index_t>(u);
    for (std::size_t k = 0; k < rel; ++k) h.holdout.push_back(static_cast<index_t>(k * 97 + u % 7));
    std::sort(h.holdout.begin(), h.holdout.end());
    hs.push_back(h);
  }
  const auto rep = evaluate_scores([&](const HeldOutUser&) { return std::vector<double>(m, 0.0); }, hs, {100}, 9);
  double dcg = 0.0, idcg = 0.0;
  for (std::size_t r = 1; r <= 100; ++r) dcg += (static_cast<double>(rel) / m) / std::log2(r + 1.0);
  for (std::size_t r = 1; r <= rel; ++r) idcg += 1.0 / std::log2(r + 1.0);
  const double expected = dcg / idcg;
  double var = 0.0;
  for (const auto& u : rep.users) var += (u.ndcg[0] - rep.ndcg(100)) * (u.ndcg[0] - rep.ndcg(100));
  const double se = std::sqrt(var / (users - 1) / users);
  EXPECT_NEAR(rep.ndcg(100), expected, 4 * se);
}

TEST(Evaluate, ModelScoresMatchForwardAndExcludedItemsAreIgnored) {
  auto model = init_model<double>(swtest::random_mask(30, 6, 2, 1), 2);
  HeldOutUser h;
  h.user = 0;
  h.fold_in = {1, 4, 9};
  h.holdout = {2, 20};
  const auto s = score_user(model, h.fold_in);
  std::vector<double> x(30, 0.0);
  for (index_t i : h.fold_in) x[i] = 1.0;
  EXPECT_EQ(s, forward(model, std::span<const double>(x)).second);
  const std::vector<HeldOutUser> one = {h};
  const auto a = evaluate(model, one, {5, 10}, 3);
  // Raising scores of excluded fold-in items cannot move metrics.
  const auto b = evaluate_scores(
      [&](const HeldOutUser& u) {
        auto v = score_user(model, u.fold_in);
        for (index_t i : u.fold_in) v[i] = 1e9;
        return v;
      },
      one, {5, 10}, 3);
  EXPECT_EQ(a.mean_ndcg, b.mean_ndcg);
  EXPECT_EQ(a.mean_recall, b.mean_recall);
}

TEST(Evaluate, ZeroModelGivesTies) {
  auto model = init_model<double>(swtest::random_mask(12, 3, 1, 1), 1);
  for (auto& w : model.layers[0].W_prime) w = 0.0;
  const auto s = score_user(model, std::vector<index_t>{0, 3});
  for (double v : s) EXPECT_EQ(v, s[0]);
}

TEST(ColdStart, QuantileAndThreshold) {
  std::vector<std::size_t> sizes(100);
  for (std::size_t u = 0; u < 100; ++u) sizes[u] = (u * 37) % 100 + 1;  // distinct counts
  const auto users = users_with_fold_in_sizes(sizes);
  const auto q = cold_start_filter(users, ColdStartFilter::bottom_quantile(0.2));
  EXPECT_EQ(q.size(), 20u);
  for (const auto& u : q) EXPECT_LE(u.fold_in.size(), 20u);
  EXPECT_EQ(cold_start_filter(users, ColdStartFilter{}).size(), 100u);
  EXPECT_EQ(cold_start_filter(users, ColdStartFilter::count_at_most(std::numeric_limits<std::size_t>::max())).size(),
            100u);
  const auto three = users_with_fold_in_sizes({1, 5, 9});
  const auto k5 = cold_start_filter(three, ColdStartFilter::count_at_most(5));
  ASSERT_EQ(k5.size(), 2u);
  EXPECT_EQ(k5[0].user, 0u);
  EXPECT_EQ(k5[1].user, 1u);
  EXPECT_THROW(cold_start_filter(three, ColdStartFilter::count_at_most(0)), Error);
}

TEST(ColdStart, QuantileTiesResolvedByUserIndex) {
  const auto users = users_with_fold_in_sizes({3, 1, 3, 3, 2});
  const auto out = cold_start_filter(users, ColdStartFilter::bottom_quantile(0.6));
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].user, 0u);
  EXPECT_EQ(out[1].user, 1u);
  EXPECT_EQ(out[2].user, 4u);
}
