#pragma once

// Planted-block interaction data with known item groups.

#include <algorithm>
#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "swrec/core.hpp"
#include "swrec/ingest.hpp"

namespace swrec {

struct PlantedSpec {
  std::size_t n_users = 2000;
  std::size_t m_items = 300;
  std::size_t n_blocks = 3;
  double within_block_p = 0.3;
  double cross_block_p = 0.01;
  /// Items of block b that also belong to block b + 1.
  std::size_t overlap_items_per_pair = 0;
  /// Heavy-tailed per-item popularity multiplier proportional to
  /// rank^-alpha (normalized to mean one, randomly placed); 0 disables it.
  double popularity_alpha = 0.0;
  std::uint64_t seed = 1;
  std::size_t max_resample = 100;

  void validate() const {
    require(n_users >= 1 && m_items >= 1, ErrorKind::config, "need at least one user and one item");
    require(n_blocks >= 1 && n_blocks <= m_items, ErrorKind::config, "need 1 <= blocks <= items");
    require(cross_block_p >= 0.0 && cross_block_p <= within_block_p && within_block_p <= 1.0, ErrorKind::config,
            "need 0 <= cross_block_p <= within_block_p <= 1");
    require(popularity_alpha >= 0.0, ErrorKind::config, "popularity_alpha must be >= 0");
    if (n_blocks > 1) {
      const std::size_t smallest = m_items / n_blocks;
      require(overlap_items_per_pair <= smallest, ErrorKind::config, "overlap exceeds the block size");
    }
  }
};

struct PlantedTruth {
  std::size_t n_blocks = 0;
  std::vector<index_t> item_block;                // primary block of each item
  std::vector<std::vector<index_t>> memberships;  // sorted blocks of each item
  std::vector<index_t> user_block;
  std::vector<double> popularity;  // per-item multiplier (all ones if disabled)

  nlohmann::json to_json() const {
    return {{"n_blocks", n_blocks},
            {"item_block", item_block},
            {"memberships", memberships},
            {"user_block", user_block},
            {"popularity", popularity}};
  }
};

struct PlantedData {
  InteractionMatrix matrix;
  PlantedTruth truth;
};

/// Expected fraction of nonzeros, ignoring resampled empty rows.
inline double planted_expected_density(const PlantedSpec& s, const PlantedTruth& t) {
  double total = 0.0;
  for (std::size_t b = 0; b < s.n_blocks; ++b) {
    double row = 0.0;
    for (std::size_t i = 0; i < s.m_items; ++i) {
      const auto& mem = t.memberships[i];
      const bool in = std::binary_search(mem.begin(), mem.end(), static_cast<index_t>(b));
      row += std::min(1.0, (in ? s.within_block_p : s.cross_block_p) * t.popularity[i]);
    }
    total += row / static_cast<double>(s.m_items);
  }
  return total / static_cast<double>(s.n_blocks);
}

inline PlantedData generate(const PlantedSpec& spec) {
  spec.validate();
  const std::size_t m = spec.m_items, B = spec.n_blocks;
  PlantedTruth truth;
  truth.n_blocks = B;
  truth.item_block.resize(m);
  truth.memberships.resize(m);
  std::vector<std::size_t> block_start(B + 1);
  for (std::size_t b = 0; b <= B; ++b) block_start[b] = b * m / B;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = block_start[b]; i < block_start[b + 1]; ++i) {
      truth.item_block[i] = static_cast<index_t>(b);
      truth.memberships[i] = {static_cast<index_t>(b)};
    }
  // The last items of block b also belong to block b + 1.
  for (std::size_t b = 0; b + 1 < B; ++b)
    for (std::size_t k = 0; k < spec.overlap_items_per_pair; ++k) {
      const std::size_t i = block_start[b + 1] - 1 - k;
      truth.memberships[i].push_back(static_cast<index_t>(b + 1));
    }

  truth.popularity.assign(m, 1.0);
  if (spec.popularity_alpha > 0.0) {
    std::vector<double> w(m);
    double sum = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      w[r] = std::pow(static_cast<double>(r + 1), -spec.popularity_alpha);
      sum += w[r];
    }
    for (auto& v : w) v *= static_cast<double>(m) / sum;
    Rng prng(derive_seed(spec.seed, 0x909u));
    prng.shuffle(w);
    truth.popularity = w;
  }

  std::vector<std::vector<double>> prob(B, std::vector<double>(m));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < m; ++i) {
      const auto& mem = truth.memberships[i];
      const bool in = std::binary_search(mem.begin(), mem.end(), static_cast<index_t>(b));
      prob[b][i] = std::min(1.0, (in ? spec.within_block_p : spec.cross_block_p) * truth.popularity[i]);
    }

  std::vector<std::vector<index_t>> rows(spec.n_users);
  truth.user_block.resize(spec.n_users);
  for (std::size_t u = 0; u < spec.n_users; ++u) {
    Rng rng(derive_seed(spec.seed, 0x45e7u, u));
    const auto b = static_cast<index_t>(rng.below(B));
    truth.user_block[u] = b;
    for (std::size_t attempt = 0; rows[u].empty(); ++attempt) {
      require(attempt < spec.max_resample, ErrorKind::config,
              "user " + std::to_string(u) + " drew an empty row " + std::to_string(spec.max_resample) +
                  " times; raise the consumption probabilities");
      for (std::size_t i = 0; i < m; ++i)
        if (rng.bernoulli(prob[b][i])) rows[u].push_back(static_cast<index_t>(i));
    }
  }
  PlantedData out;
  out.matrix = InteractionMatrix::from_rows(m, std::move(rows));
  out.truth = std::move(truth);
  return out;
}

}  // namespace swrec
