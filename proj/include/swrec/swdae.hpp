#pragma once

// Sparse-wide denoising autoencoder. A model is a stack of layers; layer l
// has an encoder pattern and a decoder pattern, both stored input-major
// (in_l x K_l). The base model is a stack of depth one.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "swrec/core.hpp"
#include "swrec/grouping.hpp"
#include "swrec/ingest.hpp"
#include "swrec/structure.hpp"

namespace swrec {

enum class LossKind { bernoulli, multinomial };

inline std::string_view to_string(LossKind k) { return k == LossKind::bernoulli ? "bernoulli" : "multinomial"; }

inline LossKind parse_loss_kind(std::string_view s) {
  if (s == "bernoulli") return LossKind::bernoulli;
  if (s == "multinomial") return LossKind::multinomial;
  throw Error(ErrorKind::config, "unknown loss '" + std::string(s) + "' (expected bernoulli or multinomial)");
}

struct CorruptionConfig {
  double input_dropout_p = 0.6;
  double hidden_dropout_p = 0.2;
  std::uint64_t seed = 11;

  void validate() const {
    require(input_dropout_p >= 0.0 && input_dropout_p < 1.0, ErrorKind::config, "input dropout must lie in [0, 1)");
    require(hidden_dropout_p >= 0.0 && hidden_dropout_p < 1.0, ErrorKind::config, "hidden dropout must lie in [0, 1)");
  }
};

struct TrainConfig {
  std::size_t batch_size = 500;
  std::size_t epochs = 100;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Coefficient of the mean L1 penalty on hidden activations.
  double lambda1 = 0.0;
  std::uint64_t seed = 13;
  std::size_t threads = 1;
  /// Restore the parameters of the epoch with the best validation score
  /// (only when a validation callback is supplied).
  bool keep_best = false;

  void validate() const {
    require(batch_size >= 1, ErrorKind::config, "batch_size must be >= 1");
    require(learning_rate > 0.0, ErrorKind::config, "learning_rate must be > 0");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0, ErrorKind::config,
            "Adam betas must lie in [0, 1)");
    require(adam_eps > 0.0, ErrorKind::config, "adam_eps must be > 0");
    require(lambda1 >= 0.0, ErrorKind::config, "lambda1 must be >= 0");
    require(threads >= 1, ErrorKind::config, "threads must be >= 1");
  }
};

#ifdef SWREC_INSTRUMENT
/// Multiply-accumulates executed by forward passes on this thread.
inline std::uint64_t& mac_counter() {
  static thread_local std::uint64_t count = 0;
  return count;
}
#endif

template <class T>
struct DaeLayer {
  std::shared_ptr<const BipartitePattern> encoder;  // in x K
  std::shared_ptr<const BipartitePattern> decoder;  // in x K
  std::vector<T> W;        // aligned with encoder positions
  std::vector<T> W_prime;  // aligned with decoder positions
  std::vector<T> b;        // K
  std::vector<T> b_prime;  // in

  std::size_t in() const { return encoder->rows(); }
  std::size_t hidden() const { return encoder->cols(); }
  bool decoder_is_transpose() const { return encoder == decoder || *encoder == *decoder; }

  /// Per-input connection count if constant, else 0.
  std::size_t regular_degree() const {
    if (in() == 0) return 0;
    const std::size_t r = encoder->row_degree(0);
    for (std::size_t i = 1; i < in(); ++i)
      if (encoder->row_degree(i) != r) return 0;
    return r;
  }

  bool operator==(const DaeLayer& o) const {
    return *encoder == *o.encoder && *decoder == *o.decoder && W == o.W && W_prime == o.W_prime && b == o.b &&
           b_prime == o.b_prime;
  }
};

template <class T>
struct SwDae {
  std::vector<DaeLayer<T>> layers;
  LossKind loss = LossKind::bernoulli;
  /// Seeds that produced the parameters, outermost first.
  std::vector<std::uint64_t> seed_lineage;
  /// Identifier of the run manifest that produced this model (may be empty).
  std::string manifest_id;

  std::size_t m() const { return layers.front().in(); }
  std::size_t depth() const { return layers.size(); }
  std::size_t code_width() const { return layers.back().hidden(); }

  bool operator==(const SwDae& o) const { return layers == o.layers && loss == o.loss; }
};

/// Glorot-style uniform initialization with masked fan counts: every weight
/// attached to neuron j is drawn from U(-s_j, s_j), s_j = sqrt(6 / (fan_in_j +
/// fan_out_j)). Encoder weights are drawn first, then decoder weights, each
/// in input-major position order. Biases start at zero.
template <class T>
DaeLayer<T> init_layer(std::shared_ptr<const BipartitePattern> encoder, std::shared_ptr<const BipartitePattern> decoder,
                       std::uint64_t seed) {
  require(encoder->rows() == decoder->rows() && encoder->cols() == decoder->cols(), ErrorKind::integrity,
          "encoder and decoder patterns differ in shape");
  DaeLayer<T> l;
  l.encoder = std::move(encoder);
  l.decoder = std::move(decoder);
  const std::size_t K = l.hidden();
  std::vector<double> s(K, 0.0);
  for (std::size_t j = 0; j < K; ++j) {
    const double fan = static_cast<double>(l.encoder->col_degree(j) + l.decoder->col_degree(j));
    if (fan > 0) s[j] = std::sqrt(6.0 / fan);
  }
  Rng rng(derive_seed(seed, 0x1417u));
  l.W.resize(l.encoder->nnz());
  for (std::size_t p = 0; p < l.W.size(); ++p) l.W[p] = static_cast<T>(rng.uniform(-s[l.encoder->col()[p]], s[l.encoder->col()[p]]));
  l.W_prime.resize(l.decoder->nnz());
  for (std::size_t p = 0; p < l.W_prime.size(); ++p)
    l.W_prime[p] = static_cast<T>(rng.uniform(-s[l.decoder->col()[p]], s[l.decoder->col()[p]]));
  l.b.assign(K, T(0));
  l.b_prime.assign(l.in(), T(0));
  return l;
}

/// Single-layer model whose decoder pattern is the encoder pattern transposed.
template <class T = real_t>
SwDae<T> init_model(const ConnectivityMask& mask, std::uint64_t seed, LossKind loss = LossKind::bernoulli) {
  auto p = std::make_shared<const BipartitePattern>(mask.pattern);
  SwDae<T> model;
  model.layers.push_back(init_layer<T>(p, p, seed));
  model.loss = loss;
  model.seed_lineage = {seed};
  return model;
}

template <class T = real_t>
SwDae<T> init_model(std::shared_ptr<const BipartitePattern> encoder, std::shared_ptr<const BipartitePattern> decoder,
                    std::uint64_t seed, LossKind loss = LossKind::bernoulli) {
  SwDae<T> model;
  model.layers.push_back(init_layer<T>(std::move(encoder), std::move(decoder), seed));
  model.loss = loss;
  model.seed_lineage = {seed};
  return model;
}

// ---------------------------------------------------------------------------
// Elementwise pieces.

template <class T>
inline T sigmoid(T x) {
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

/// Inverted dropout on the nonzero entries of `x`, in place. Zero entries
/// consume no random draws.
template <class T>
void corrupt_in_place(std::span<T> x, double p, Rng& rng) {
  if (p <= 0.0) return;
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  for (auto& v : x) {
    if (v == T(0)) continue;
    v = rng.bernoulli(p) ? T(0) : v * scale;
  }
}

template <class T>
std::vector<T> corrupt(std::span<const T> x, const CorruptionConfig& cfg, Rng& rng) {
  std::vector<T> out(x.begin(), x.end());
  corrupt_in_place(std::span<T>(out), cfg.input_dropout_p, rng);
  return out;
}

/// Per-example negative log-likelihood of targets `x` under the decoder
/// output `logits`.
template <class T>
double example_loss(LossKind kind, std::span<const T> logits, std::span<const T> x) {
  double s = 0.0;
  if (kind == LossKind::bernoulli) {
    for (std::size_t i = 0; i < logits.size(); ++i)
      s += softplus(static_cast<double>(logits[i])) - static_cast<double>(x[i]) * static_cast<double>(logits[i]);
    return s;
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (T l : logits) mx = std::max(mx, static_cast<double>(l));
  double z = 0.0;
  for (T l : logits) z += std::exp(static_cast<double>(l) - mx);
  const double lse = mx + std::log(z);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    total += static_cast<double>(x[i]);
    s -= static_cast<double>(x[i]) * static_cast<double>(logits[i]);
  }
  return s + total * lse;
}

/// Mean loss over a batch of (logits, target) rows.
template <class T>
double loss(LossKind kind, const std::vector<std::vector<T>>& logits, const std::vector<std::vector<T>>& x) {
  require(logits.size() == x.size() && !x.empty(), ErrorKind::integrity, "loss needs matching non-empty batches");
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += example_loss<T>(kind, logits[k], x[k]);
  return s / static_cast<double>(x.size());
}

// ---------------------------------------------------------------------------
// Forward / backward.

/// Buffers for one example passing through a stack of depth d.
///   e[0] input (corrupted), e[l+1] = a[l] * s[l]
///   a[l] encoder activation of layer l before dropout, s[l] its dropout scale
///   c[l] (1 <= l < d) decoder activation feeding decoder layer l-1
///   logits, target
template <class T>
struct Workspace {
  std::vector<std::vector<T>> e, a, s, c;
  std::vector<T> logits, target;
  // Backward buffers.
  std::vector<std::vector<T>> dy, dc, de;
  std::vector<T> dz;

  explicit Workspace(const SwDae<T>& model) { resize(model); }
  Workspace() = default;

  void resize(const SwDae<T>& model) {
    const std::size_t d = model.depth();
    e.resize(d + 1);
    a.resize(d);
    s.resize(d);
    c.resize(d + 1);
    dy.resize(d);
    dc.resize(d + 1);
    de.resize(d + 1);
    e[0].assign(model.m(), T(0));
    for (std::size_t l = 0; l < d; ++l) {
      const std::size_t K = model.layers[l].hidden();
      e[l + 1].assign(K, T(0));
      a[l].assign(K, T(0));
      s[l].assign(K, T(1));
      c[l + 1].assign(K, T(0));
      dc[l + 1].assign(K, T(0));
      de[l + 1].assign(K, T(0));
      dy[l].assign(model.layers[l].in(), T(0));
    }
    logits.assign(model.m(), T(0));
    target.assign(model.m(), T(0));
  }

  std::span<T> input() { return e[0]; }
};

namespace detail {

template <class T>
void check_finite(std::span<const T> v, const char* layer_tag, std::size_t layer) {
  for (T x : v)
    if (!std::isfinite(static_cast<double>(x)))
      throw Error(ErrorKind::numeric, "non-finite value in " + std::string(layer_tag) + " of layer " + std::to_string(layer));
}

}  // namespace detail

/// Forward pass over ws.e[0]. When `hidden_dropout_p > 0` the dropout scales
/// s[l] are drawn from `rng`; otherwise s[l] = 1. Pass `keep_scales = true`
/// to reuse the scales already stored in the workspace.
template <class T>
void forward(const SwDae<T>& model, Workspace<T>& ws, double hidden_dropout_p = 0.0, Rng* rng = nullptr,
             bool keep_scales = false) {
  const std::size_t d = model.depth();
  for (std::size_t l = 0; l < d; ++l) {
    const DaeLayer<T>& L = model.layers[l];
    const auto& pat = *L.encoder;
    auto& z = ws.a[l];
    std::copy(L.b.begin(), L.b.end(), z.begin());
    const auto& x = ws.e[l];
    const auto& rp = pat.row_ptr();
    const auto& cols = pat.col();
    for (std::size_t i = 0; i < L.in(); ++i) {
      const T xi = x[i];
      for (auto p = rp[i]; p < rp[i + 1]; ++p) z[cols[p]] += L.W[p] * xi;
    }
#ifdef SWREC_INSTRUMENT
    mac_counter() += pat.nnz();
#endif
    for (auto& v : z) v = sigmoid(v);
    detail::check_finite<T>(z, "encoder", l);
    auto& sc = ws.s[l];
    if (!keep_scales) {
      if (hidden_dropout_p > 0.0 && rng) {
        const T keep = static_cast<T>(1.0 / (1.0 - hidden_dropout_p));
        for (auto& v : sc) v = rng->bernoulli(hidden_dropout_p) ? T(0) : keep;
      } else {
        std::fill(sc.begin(), sc.end(), T(1));
      }
    }
    for (std::size_t j = 0; j < z.size(); ++j) ws.e[l + 1][j] = z[j] * sc[j];
  }
  ws.c[d] = ws.e[d];
  for (std::size_t l = d; l-- > 0;) {
    const DaeLayer<T>& L = model.layers[l];
    const auto& pat = *L.decoder;
    const auto& h = ws.c[l + 1];
    auto& y = l == 0 ? ws.logits : ws.c[l];
    const auto& rp = pat.row_ptr();
    const auto& cols = pat.col();
    for (std::size_t i = 0; i < L.in(); ++i) {
      T acc = L.b_prime[i];
      for (auto p = rp[i]; p < rp[i + 1]; ++p) acc += L.W_prime[p] * h[cols[p]];
      y[i] = acc;
    }
#ifdef SWREC_INSTRUMENT
    mac_counter() += pat.nnz();
#endif
    if (l > 0)
      for (auto& v : y) v = sigmoid(v);
    detail::check_finite<T>(y, l == 0 ? "decoder output" : "decoder", l);
  }
}

/// Clean forward pass on a dense input; returns the hidden code of the first
/// layer and the logits.
template <class T>
std::pair<std::vector<T>, std::vector<T>> forward(const SwDae<T>& model, std::span<const T> x_tilde) {
  Workspace<T> ws(model);
  require(x_tilde.size() == model.m(), ErrorKind::integrity, "input length does not match the model");
  std::copy(x_tilde.begin(), x_tilde.end(), ws.e[0].begin());
  forward(model, ws);
  return {ws.a[0], ws.logits};
}

template <class T>
struct Gradient {
  struct Layer {
    std::vector<T> W, W_prime, b, b_prime;
  };
  std::vector<Layer> layers;
  double loss = 0.0;

  explicit Gradient(const SwDae<T>& model) {
    layers.resize(model.depth());
    for (std::size_t l = 0; l < model.depth(); ++l) {
      layers[l].W.assign(model.layers[l].W.size(), T(0));
      layers[l].W_prime.assign(model.layers[l].W_prime.size(), T(0));
      layers[l].b.assign(model.layers[l].b.size(), T(0));
      layers[l].b_prime.assign(model.layers[l].b_prime.size(), T(0));
    }
  }
  Gradient() = default;

  void zero() {
    for (auto& L : layers) {
      std::fill(L.W.begin(), L.W.end(), T(0));
      std::fill(L.W_prime.begin(), L.W_prime.end(), T(0));
      std::fill(L.b.begin(), L.b.end(), T(0));
      std::fill(L.b_prime.begin(), L.b_prime.end(), T(0));
    }
    loss = 0.0;
  }

  void add(const Gradient& o) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto add_vec = [](std::vector<T>& a, const std::vector<T>& b) {
        for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
      };
      add_vec(layers[l].W, o.layers[l].W);
      add_vec(layers[l].W_prime, o.layers[l].W_prime);
      add_vec(layers[l].b, o.layers[l].b);
      add_vec(layers[l].b_prime, o.layers[l].b_prime);
    }
    loss += o.loss;
  }

  void scale(T f) {
    for (auto& L : layers) {
      for (auto* v : {&L.W, &L.W_prime, &L.b, &L.b_prime})
        for (auto& x : *v) x *= f;
    }
    loss *= static_cast<double>(f);
  }
};

/// Per-example objective after a forward pass: data loss against ws.target
/// plus lambda1 * sum of pre-dropout hidden activations over all encoder
/// layers.
template <class T>
double objective(const SwDae<T>& model, const Workspace<T>& ws, double lambda1) {
  double v = example_loss<T>(model.loss, ws.logits, ws.target);
  if (lambda1 > 0.0)
    for (const auto& a : ws.a)
      for (T x : a) v += lambda1 * static_cast<double>(x);
  return v;
}

/// Accumulate the gradient of `objective` into `grad` (not averaged).
template <class T>
void backward(const SwDae<T>& model, Workspace<T>& ws, Gradient<T>& grad, double lambda1) {
  const std::size_t d = model.depth();
  const std::size_t m = model.m();
  // Output layer.
  auto& dy0 = ws.dy[0];
  if (model.loss == LossKind::bernoulli) {
    for (std::size_t i = 0; i < m; ++i) dy0[i] = sigmoid(ws.logits[i]) - ws.target[i];
  } else {
    T mx = ws.logits[0];
    for (T l : ws.logits) mx = std::max(mx, l);
    T z = 0, total = 0;
    for (std::size_t i = 0; i < m; ++i) {
      dy0[i] = std::exp(ws.logits[i] - mx);
      z += dy0[i];
      total += ws.target[i];
    }
    for (std::size_t i = 0; i < m; ++i) dy0[i] = total * dy0[i] / z - ws.target[i];
  }
  // Decoder layers, from the output toward the code.
  for (std::size_t l = 0; l < d; ++l) {
    const DaeLayer<T>& L = model.layers[l];
    auto& G = grad.layers[l];
    const auto& pat = *L.decoder;
    const auto& rp = pat.row_ptr();
    const auto& cols = pat.col();
    const auto& h = ws.c[l + 1];
    auto& dh = ws.dc[l + 1];
    std::fill(dh.begin(), dh.end(), T(0));
    const auto& dy = ws.dy[l];
    for (std::size_t i = 0; i < L.in(); ++i) {
      const T g = dy[i];
      G.b_prime[i] += g;
      for (auto p = rp[i]; p < rp[i + 1]; ++p) {
        const index_t j = cols[p];
        G.W_prime[p] += g * h[j];
        dh[j] += L.W_prime[p] * g;
      }
    }
    if (l + 1 < d) {
      auto& dyn = ws.dy[l + 1];
      for (std::size_t j = 0; j < dh.size(); ++j) dyn[j] = dh[j] * h[j] * (T(1) - h[j]);
    } else {
      ws.de[d] = dh;
    }
  }
  // Encoder layers, from the code back toward the input.
  for (std::size_t l = d; l-- > 0;) {
    const DaeLayer<T>& L = model.layers[l];
    auto& G = grad.layers[l];
    const auto& pat = *L.encoder;
    const auto& rp = pat.row_ptr();
    const auto& cols = pat.col();
    const auto& a = ws.a[l];
    auto& dz = ws.dz;
    dz.resize(a.size());
    const T l1 = static_cast<T>(lambda1);
    for (std::size_t j = 0; j < a.size(); ++j) {
      const T da = ws.de[l + 1][j] * ws.s[l][j] + l1;
      dz[j] = da * a[j] * (T(1) - a[j]);
      G.b[j] += dz[j];
    }
    const auto& x = ws.e[l];
    const bool need_input_grad = l > 0;
    if (need_input_grad) std::fill(ws.de[l].begin(), ws.de[l].end(), T(0));
    for (std::size_t i = 0; i < L.in(); ++i) {
      const T xi = x[i];
      if (xi == T(0) && !need_input_grad) continue;
      T acc = 0;
      for (auto p = rp[i]; p < rp[i + 1]; ++p) {
        G.W[p] += dz[cols[p]] * xi;
        acc += L.W[p] * dz[cols[p]];
      }
      // e[l] = a[l-1] * s[l-1]; the next iteration applies s and the sigmoid
      // derivative of layer l-1.
      if (need_input_grad) ws.de[l][i] = acc;
    }
  }
  grad.loss += objective(model, ws, lambda1);
}

// ---------------------------------------------------------------------------
// Training data.

/// Rows of either a binary interaction matrix (restricted to a user list) or
/// a dense real-valued matrix. Each example expands to a dense vector.
class ExampleSource {
 public:
  static ExampleSource binary(const InteractionMatrix& x, std::vector<index_t> users) {
    ExampleSource s;
    s.sparse_ = &x;
    s.users_ = std::move(users);
    s.width_ = x.m();
    return s;
  }
  static ExampleSource binary(const InteractionMatrix& x) { return binary(x, iota_indices(x.n())); }

  /// Per-user item lists (for example fold-in sets).
  static ExampleSource lists(std::size_t width, std::vector<std::vector<index_t>> rows) {
    ExampleSource s;
    s.lists_ = std::move(rows);
    s.width_ = width;
    s.use_lists_ = true;
    return s;
  }

  static ExampleSource dense(const Eigen::MatrixXd& h) {
    ExampleSource s;
    s.dense_ = &h;
    s.width_ = static_cast<std::size_t>(h.cols());
    return s;
  }

  std::size_t size() const {
    if (use_lists_) return lists_.size();
    return sparse_ ? users_.size() : static_cast<std::size_t>(dense_->rows());
  }
  std::size_t width() const { return width_; }

  template <class T>
  void fill(std::size_t k, std::span<T> out) const {
    std::fill(out.begin(), out.end(), T(0));
    if (use_lists_) {
      for (index_t i : lists_[k]) out[i] = T(1);
    } else if (sparse_) {
      for (index_t i : sparse_->row(users_[k])) out[i] = T(1);
    } else {
      for (Eigen::Index j = 0; j < dense_->cols(); ++j) out[static_cast<std::size_t>(j)] = static_cast<T>((*dense_)(static_cast<Eigen::Index>(k), j));
    }
  }

 private:
  const InteractionMatrix* sparse_ = nullptr;
  std::vector<index_t> users_;
  std::vector<std::vector<index_t>> lists_;
  bool use_lists_ = false;
  const Eigen::MatrixXd* dense_ = nullptr;
  std::size_t width_ = 0;
};

// ---------------------------------------------------------------------------
// Training.

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_ndcg;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::optional<std::size_t> best_epoch;
  double best_val = -1.0;
};

template <class T>
struct TrainCallbacks {
  /// Validation NDCG@100 of the current parameters.
  std::function<double(const SwDae<T>&)> validate;
  /// Called after every epoch (after validation).
  std::function<void(const EpochLog&, const SwDae<T>&)> on_epoch;
};

inline nlohmann::json config_echo(const CorruptionConfig& c, const TrainConfig& t, LossKind loss) {
  return {{"input_dropout_p", c.input_dropout_p},
          {"hidden_dropout_p", c.hidden_dropout_p},
          {"corruption_seed", c.seed},
          {"batch_size", t.batch_size},
          {"epochs", t.epochs},
          {"learning_rate", t.learning_rate},
          {"adam_beta1", t.adam_beta1},
          {"adam_beta2", t.adam_beta2},
          {"adam_eps", t.adam_eps},
          {"lambda1", t.lambda1},
          {"train_seed", t.seed},
          {"keep_best", t.keep_best},
          {"loss", std::string(to_string(loss))}};
}

inline nlohmann::json train_log_json(const CorruptionConfig& c, const TrainConfig& t, LossKind loss,
                                     const TrainResult& r) {
  nlohmann::json j;
  j["config"] = config_echo(c, t, loss);
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : r.log) {
    nlohmann::json row = {{"epoch", e.epoch}, {"train_loss", e.train_loss}};
    if (e.val_ndcg) row["val_ndcg100"] = *e.val_ndcg;
    j["epochs"].push_back(row);
  }
  if (r.best_epoch) {
    j["best_epoch"] = *r.best_epoch;
    j["best_val_ndcg100"] = r.best_val;
  }
  return j;
}

namespace detail {

template <class T>
struct AdamState {
  std::vector<typename Gradient<T>::Layer> m, v;
  std::uint64_t t = 0;

  explicit AdamState(const SwDae<T>& model) {
    Gradient<T> g(model);
    m = g.layers;
    v = g.layers;
  }

  void step(SwDae<T>& model, const Gradient<T>& g, const TrainConfig& cfg) {
    ++t;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    auto upd = [&](std::vector<T>& theta, const std::vector<T>& grad, std::vector<T>& mm, std::vector<T>& vv) {
      for (std::size_t k = 0; k < theta.size(); ++k) {
        const double gk = static_cast<double>(grad[k]);
        const double mk = b1 * static_cast<double>(mm[k]) + (1.0 - b1) * gk;
        const double vk = b2 * static_cast<double>(vv[k]) + (1.0 - b2) * gk * gk;
        mm[k] = static_cast<T>(mk);
        vv[k] = static_cast<T>(vk);
        theta[k] -= static_cast<T>(cfg.learning_rate * (mk / c1) / (std::sqrt(vk / c2) + cfg.adam_eps));
      }
    };
    for (std::size_t l = 0; l < model.depth(); ++l) {
      auto& L = model.layers[l];
      upd(L.W, g.layers[l].W, m[l].W, v[l].W);
      upd(L.W_prime, g.layers[l].W_prime, m[l].W_prime, v[l].W_prime);
      upd(L.b, g.layers[l].b, m[l].b, v[l].b);
      upd(L.b_prime, g.layers[l].b_prime, m[l].b_prime, v[l].b_prime);
    }
  }
};

inline constexpr std::size_t kChunk = 64;

}  // namespace detail

/// Mini-batch Adam on the denoising objective. Examples are shuffled per
/// epoch; each example's corruption stream depends only on (seed, epoch,
/// example index), and batch gradients are reduced over fixed-size chunks in
/// a fixed pairwise order, so results do not depend on the thread count.
template <class T>
TrainResult train(SwDae<T>& model, const ExampleSource& data, const CorruptionConfig& corruption,
                  const TrainConfig& cfg, const TrainCallbacks<T>& callbacks = {}) {
  corruption.validate();
  cfg.validate();
  require(data.width() == model.m(), ErrorKind::integrity, "training rows do not match the model width");
  require(data.size() >= 1, ErrorKind::empty_dataset, "no training rows");

  const std::size_t n = data.size();
  const std::size_t max_chunks = (std::min(cfg.batch_size, n) + detail::kChunk - 1) / detail::kChunk;
  std::vector<Gradient<T>> chunk_grads(max_chunks, Gradient<T>(model));
  const std::size_t threads = std::min(cfg.threads, max_chunks);
  std::vector<Workspace<T>> spaces(threads, Workspace<T>(model));
  detail::AdamState<T> adam(model);
  std::vector<index_t> order = iota_indices(n);

  TrainResult result;
  std::optional<SwDae<T>> best;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, 0x5u, epoch));
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      const std::size_t chunks = (stop - start + detail::kChunk - 1) / detail::kChunk;

      auto run_chunk = [&](std::size_t c, Workspace<T>& ws) {
        Gradient<T>& g = chunk_grads[c];
        g.zero();
        const std::size_t lo = start + c * detail::kChunk;
        const std::size_t hi = std::min(stop, lo + detail::kChunk);
        for (std::size_t k = lo; k < hi; ++k) {
          const index_t ex = order[k];
          Rng rng(derive_seed(corruption.seed, cfg.seed, epoch, ex));
          data.fill<T>(ex, ws.target);
          std::copy(ws.target.begin(), ws.target.end(), ws.e[0].begin());
          corrupt_in_place(std::span<T>(ws.e[0]), corruption.input_dropout_p, rng);
          forward(model, ws, corruption.hidden_dropout_p, &rng);
          backward(model, ws, g, cfg.lambda1);
        }
      };

      if (threads <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) run_chunk(c, spaces[0]);
      } else {
        std::vector<std::exception_ptr> errors(threads);
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t)
          pool.emplace_back([&, t] {
            try {
              for (std::size_t c = t; c < chunks; c += threads) run_chunk(c, spaces[t]);
            } catch (...) {
              errors[t] = std::current_exception();
            }
          });
        for (auto& th : pool) th.join();
        for (auto& e : errors)
          if (e) std::rethrow_exception(e);
      }
      for (std::size_t step = 1; step < chunks; step *= 2)
        for (std::size_t c = 0; c + step < chunks; c += 2 * step) chunk_grads[c].add(chunk_grads[c + step]);
      Gradient<T>& g = chunk_grads[0];
      const double batch_loss = g.loss;
      if (!std::isfinite(batch_loss))
        throw Error(ErrorKind::numeric,
                    "training diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      g.scale(static_cast<T>(1.0 / static_cast<double>(stop - start)));
      adam.step(model, g, cfg);
      epoch_loss += batch_loss;
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_loss / static_cast<double>(n);
    if (callbacks.validate) {
      entry.val_ndcg = callbacks.validate(model);
      if (*entry.val_ndcg > result.best_val) {
        result.best_val = *entry.val_ndcg;
        result.best_epoch = epoch;
        if (cfg.keep_best) best = model;
      }
    }
    result.log.push_back(entry);
    if (callbacks.on_epoch) callbacks.on_epoch(entry, model);
  }
  if (cfg.keep_best && best) model = std::move(*best);
  return result;
}

// ---------------------------------------------------------------------------
// Encoding and stacking.

/// Clean encoder pass of the full stack; one row of code activations per
/// example.
template <class T>
Eigen::MatrixXd encode_dataset(const SwDae<T>& model, const ExampleSource& rows) {
  require(rows.width() == model.m(), ErrorKind::integrity, "rows do not match the model width");
  Workspace<T> ws(model);
  const std::size_t d = model.depth();
  Eigen::MatrixXd h(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(model.code_width()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    rows.fill<T>(k, ws.e[0]);
    forward(model, ws);
    for (std::size_t j = 0; j < model.code_width(); ++j)
      h(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = static_cast<double>(ws.a[d - 1][j]);
  }
  return h;
}

struct StackConfig {
  GroupingConfig grouping;
  SpectralAlgo algo = SpectralAlgo::laplacian;
  CorruptionConfig corruption;
  TrainConfig train;
  /// Epochs of end-to-end training of the whole stack afterwards (0 = none).
  std::size_t finetune_epochs = 0;
};

/// Greedy layer-wise growth: encode the data with the current stack, group
/// the code units, train a new sigmoid layer on the codes, then append it.
template <class T>
SwDae<T> stack_layer(const SwDae<T>& stacked, const ExampleSource& data, const StackConfig& cfg) {
  const Eigen::MatrixXd h = encode_dataset(stacked, data);
  const GroupingResult g = item_grouping(h, cfg.grouping, cfg.algo);
  const ConnectivityMask mask = build_mask(g.clusters, stacked.code_width());
  const std::uint64_t seed = derive_seed(cfg.train.seed, 0x57acu, stacked.depth());
  SwDae<T> layer = init_model<T>(mask, seed, LossKind::bernoulli);
  train(layer, ExampleSource::dense(h), cfg.corruption, cfg.train);

  SwDae<T> out = stacked;
  out.layers.push_back(std::move(layer.layers.front()));
  out.seed_lineage.push_back(seed);
  if (cfg.finetune_epochs > 0) {
    TrainConfig ft = cfg.train;
    ft.epochs = cfg.finetune_epochs;
    ft.seed = derive_seed(cfg.train.seed, 0xf1eu, out.depth());
    train(out, data, cfg.corruption, ft);
  }
  return out;
}

/// Dense item x neuron matrix of a layer's encoder or decoder weights
/// (mainly for tests and diagnostics).
template <class T>
Eigen::MatrixXd densify(const BipartitePattern& p, const std::vector<T>& w) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p.rows()), static_cast<Eigen::Index>(p.cols()));
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (auto q = p.row_ptr()[i]; q < p.row_ptr()[i + 1]; ++q)
      d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p.col()[q])) = static_cast<double>(w[q]);
  return d;
}

}  // namespace swrec
