#pragma once

// Comparison models: a fully connected DAE, magnitude pruning with
// retraining, and L1 regularization of hidden activations. All of them go
// through the same training code as the sparse model.

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "swrec/structure.hpp"
#include "swrec/swdae.hpp"

namespace swrec {

struct PruneConfig {
  double keep_fraction = 0.1;
  std::size_t retrain_epochs = 100;

  void validate() const {
    require(keep_fraction > 0.0 && keep_fraction <= 1.0, ErrorKind::config, "keep_fraction must lie in (0, 1]");
  }
};

struct RegConfig {
  double lambda1 = 1e-3;

  void validate() const { require(lambda1 >= 0.0, ErrorKind::config, "lambda1 must be >= 0"); }
};

/// Fully connected model: the saturated mask with every item wired to every
/// neuron.
template <class T = real_t>
SwDae<T> init_fc(std::size_t m, std::size_t K, std::uint64_t seed, LossKind loss = LossKind::bernoulli) {
  require(m >= 1 && K >= 1, ErrorKind::config, "fully connected model needs m, K >= 1");
  ConnectivityMask mask;
  mask.pattern = BipartitePattern::full(m, K);
  mask.R = K;
  return init_model<T>(mask, seed, loss);
}

template <class T = real_t>
SwDae<T> train_fc(std::size_t m, std::size_t K, const ExampleSource& data, const CorruptionConfig& corruption,
                  const TrainConfig& cfg, std::uint64_t init_seed, LossKind loss = LossKind::bernoulli,
                  const TrainCallbacks<T>& callbacks = {}, TrainResult* log = nullptr) {
  SwDae<T> model = init_fc<T>(m, K, init_seed, loss);
  TrainResult r = train(model, data, corruption, cfg, callbacks);
  if (log) *log = std::move(r);
  return model;
}

template <class T = real_t>
SwDae<T> train_fc_reg(std::size_t m, std::size_t K, const ExampleSource& data, const CorruptionConfig& corruption,
                      TrainConfig cfg, const RegConfig& reg, std::uint64_t init_seed,
                      LossKind loss = LossKind::bernoulli, const TrainCallbacks<T>& callbacks = {},
                      TrainResult* log = nullptr) {
  reg.validate();
  cfg.lambda1 = reg.lambda1;
  return train_fc<T>(m, K, data, corruption, cfg, init_seed, loss, callbacks, log);
}

/// Positions of the ceil(keep * nnz) largest-magnitude weights, ties broken
/// by lower position, returned in ascending position order.
template <class T>
std::vector<std::size_t> magnitude_survivors(std::span<const T> w, double keep) {
  const std::size_t nnz = w.size();
  const auto count = std::min<std::size_t>(
      nnz, static_cast<std::size_t>(std::ceil(keep * static_cast<double>(nnz) - 1e-9)));
  std::vector<std::size_t> idx(nnz);
  for (std::size_t k = 0; k < nnz; ++k) idx[k] = k;
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double wa = std::abs(static_cast<double>(w[a])), wb = std::abs(static_cast<double>(w[b]));
                      if (wa != wb) return wa > wb;
                      return a < b;
                    });
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct PruneOutcome {
  std::vector<std::string> warnings;
  std::vector<std::size_t> encoder_kept, decoder_kept;  // per layer
};

namespace detail {

template <class T>
std::pair<std::shared_ptr<const BipartitePattern>, std::vector<T>> prune_matrix(const BipartitePattern& p,
                                                                              const std::vector<T>& w, double keep) {
  const auto keep_pos = magnitude_survivors<T>(w, keep);
  std::vector<std::vector<index_t>> rows(p.rows());
  std::vector<T> vals;
  vals.reserve(keep_pos.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (auto q = p.row_ptr()[i]; q < p.row_ptr()[i + 1]; ++q) {
      if (k < keep_pos.size() && keep_pos[k] == q) {
        rows[i].push_back(p.col()[q]);
        vals.push_back(w[q]);
        ++k;
      }
    }
  return {std::make_shared<const BipartitePattern>(BipartitePattern::from_rows(p.cols(), rows)), std::move(vals)};
}

}  // namespace detail

/// Global magnitude pruning per weight matrix (encoder and decoder
/// thresholded separately). Surviving weights keep their trained values and
/// biases are never pruned. Neurons left without any connection keep their
/// bias and produce a warning.
template <class T>
SwDae<T> prune(const SwDae<T>& model, double keep_fraction, PruneOutcome* outcome = nullptr) {
  require(keep_fraction > 0.0 && keep_fraction <= 1.0, ErrorKind::config, "keep_fraction must lie in (0, 1]");
  SwDae<T> out = model;
  PruneOutcome local;
  for (std::size_t l = 0; l < out.depth(); ++l) {
    auto& L = out.layers[l];
    auto [enc, w] = detail::prune_matrix(*L.encoder, L.W, keep_fraction);
    auto [dec, wp] = detail::prune_matrix(*L.decoder, L.W_prime, keep_fraction);
    L.encoder = enc;
    L.decoder = dec;
    L.W = std::move(w);
    L.W_prime = std::move(wp);
    local.encoder_kept.push_back(enc->nnz());
    local.decoder_kept.push_back(dec->nnz());
    std::size_t isolated = 0;
    for (std::size_t j = 0; j < L.hidden(); ++j)
      if (enc->col_degree(j) == 0 && dec->col_degree(j) == 0) ++isolated;
    if (isolated > 0)
      local.warnings.push_back("layer " + std::to_string(l + 1) + ": " + std::to_string(isolated) +
                               " neurons lost every connection and keep only their bias");
  }
  if (outcome) *outcome = std::move(local);
  return out;
}

template <class T>
SwDae<T> prune_and_retrain(const SwDae<T>& trained, const PruneConfig& cfg, const ExampleSource& data,
                           const CorruptionConfig& corruption, TrainConfig train_cfg,
                           const TrainCallbacks<T>& callbacks = {}, PruneOutcome* outcome = nullptr,
                           TrainResult* log = nullptr) {
  cfg.validate();
  SwDae<T> model = prune(trained, cfg.keep_fraction, outcome);
  train_cfg.epochs = cfg.retrain_epochs;
  train_cfg.seed = derive_seed(train_cfg.seed, 0x9a0eu);
  TrainResult r = train(model, data, corruption, train_cfg, callbacks);
  if (log) *log = std::move(r);
  return model;
}

/// Mean of the first-layer hidden activations over a data set (clean pass).
template <class T>
double mean_hidden_activation(const SwDae<T>& model, const ExampleSource& rows) {
  Workspace<T> ws(model);
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    rows.fill<T>(k, ws.e[0]);
    forward(model, ws);
    for (T a : ws.a[0]) s += static_cast<double>(a);
    count += ws.a[0].size();
  }
  return count ? s / static_cast<double>(count) : 0.0;
}

}  // namespace swrec
