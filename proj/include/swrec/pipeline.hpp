#pragma once

// End-to-end runs: data -> split -> embed -> group -> train -> eval ->
// diagnose. Every stage writes into `<cache_dir>/<stage>/<key>/`, where the
// key hashes the stage's own settings together with the keys of its inputs.
// A stage whose directory already holds a completion marker is skipped.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swrec/baselines.hpp"
#include "swrec/config.hpp"
#include "swrec/dataset.hpp"
#include "swrec/diagnostics.hpp"
#include "swrec/eval.hpp"
#include "swrec/grouping.hpp"
#include "swrec/model_io.hpp"
#include "swrec/spectral.hpp"
#include "swrec/structure.hpp"
#include "swrec/swdae.hpp"
#include "swrec/synth.hpp"

namespace swrec {

enum class ModelKind { sw, fc, prune, l1reg };

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::sw: return "sw";
    case ModelKind::fc: return "fc";
    case ModelKind::prune: return "prune";
    default: return "l1reg";
  }
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "sw") return ModelKind::sw;
  if (s == "fc") return ModelKind::fc;
  if (s == "prune") return ModelKind::prune;
  if (s == "l1reg") return ModelKind::l1reg;
  throw Error(ErrorKind::config, "unknown model kind '" + std::string(s) + "' (sw, fc, prune, l1reg)");
}

/// Width of a fully connected model whose parameter count (weights plus
/// biases) is closest to a regular sparse model with m items, K neurons and
/// overlap R.
inline std::size_t equal_parameter_width(std::size_t m, std::size_t K, std::size_t R) {
  const double target = 2.0 * static_cast<double>(m) * static_cast<double>(R) + static_cast<double>(K);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(target / (2.0 * static_cast<double>(m) + 1.0))));
}

struct PipelineConfig {
  // data
  std::string source = "synth";  // synth | ingest | dataset
  std::string input;             // events file or dataset directory
  std::string format = "csv";
  double threshold = 4.0;
  std::size_t min_user_events = 5;
  std::size_t min_item_users = 0;
  PlantedSpec synth{};
  // split
  std::size_t val_users = 0;   // 0: a tenth of the users
  std::size_t test_users = 0;  // 0: a tenth of the users
  double fold_in_fraction = 0.8;
  bool use_existing_split = true;
  // seeds
  std::uint64_t seed = 42;
  // grouping
  SpectralAlgo algo = SpectralAlgo::laplacian;
  GroupingConfig grouping{};
  // model
  ModelKind kind = ModelKind::sw;
  LossKind loss = LossKind::bernoulli;
  std::size_t fc_hidden = 0;  // 0: automatic width
  std::size_t depth = 1;
  std::size_t finetune_epochs = 0;
  std::vector<std::size_t> stack_k{};  // widths of layers 2..depth
  CorruptionConfig corruption{};
  TrainConfig train{};
  bool track_norms = false;
  double keep_fraction = 0.0;  // 0: R / K
  std::size_t retrain_epochs = 100;
  // eval
  std::vector<std::size_t> cutoffs{20, 50, 100};
  std::uint64_t tie_seed = 0;
  ColdStartFilter cold_start{};
  // run
  std::string out_dir = "run";
  std::string cache_dir;  // empty: <out_dir>/cache

  static PipelineConfig from(const KeyValues& kv);
  nlohmann::json snapshot() const;
};

namespace detail {

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "data.source", "data.input", "data.format", "data.threshold", "data.min_user_events", "data.min_item_users",
      "synth.users", "synth.items", "synth.blocks", "synth.pin", "synth.pout", "synth.overlap", "synth.alpha",
      "synth.seed", "split.val_users", "split.test_users", "split.fold_in", "split.use_existing", "seed",
      "group.algo", "group.k", "group.r", "group.sparsity", "group.f", "group.kmeans_iters", "group.kmeans_restarts", "group.normalization",
      "eigs.tol", "eigs.max_restarts", "eigs.krylov", "model.kind", "model.loss", "model.fc_hidden", "model.depth",
      "model.stack_k", "model.finetune_epochs", "train.epochs", "train.batch", "train.lr", "train.beta1",
      "train.beta2", "train.eps", "train.lambda1", "train.threads", "train.keep_best", "train.input_dropout",
      "train.hidden_dropout", "train.track_norms", "prune.keep_fraction", "prune.retrain_epochs", "eval.cutoffs",
      "eval.tie_seed", "eval.cold_start_quantile", "eval.cold_start_k", "run.out_dir", "run.cache_dir"};
  return keys;
}

}  // namespace detail

inline PipelineConfig PipelineConfig::from(const KeyValues& kv) {
  for (const auto& [k, v] : kv.values())
    require(detail::known_keys().count(k) > 0, ErrorKind::config, "unknown configuration key '" + k + "'");
  PipelineConfig c;
  c.source = kv.str("data.source", c.source);
  require(c.source == "synth" || c.source == "ingest" || c.source == "dataset", ErrorKind::config,
          "data.source must be synth, ingest or dataset");
  c.input = kv.str("data.input", c.input);
  c.format = kv.str("data.format", c.format);
  c.threshold = kv.num("data.threshold", c.threshold);
  c.min_user_events = kv.num("data.min_user_events", c.min_user_events);
  c.min_item_users = kv.num("data.min_item_users", c.min_item_users);
  c.synth.n_users = kv.num("synth.users", c.synth.n_users);
  c.synth.m_items = kv.num("synth.items", c.synth.m_items);
  c.synth.n_blocks = kv.num("synth.blocks", c.synth.n_blocks);
  c.synth.within_block_p = kv.num("synth.pin", c.synth.within_block_p);
  c.synth.cross_block_p = kv.num("synth.pout", c.synth.cross_block_p);
  c.synth.overlap_items_per_pair = kv.num("synth.overlap", c.synth.overlap_items_per_pair);
  c.synth.popularity_alpha = kv.num("synth.alpha", c.synth.popularity_alpha);
  c.synth.seed = kv.num("synth.seed", c.synth.seed);
  c.val_users = kv.num("split.val_users", c.val_users);
  c.test_users = kv.num("split.test_users", c.test_users);
  c.fold_in_fraction = kv.num("split.fold_in", c.fold_in_fraction);
  c.use_existing_split = kv.flag("split.use_existing", c.use_existing_split);
  c.seed = kv.num("seed", c.seed);

  c.algo = parse_spectral_algo(kv.str("group.algo", "laplacian"));
  c.grouping.K = kv.num("group.k", std::size_t{100});
  if (kv.has("group.sparsity")) {
    require(!kv.has("group.r"), ErrorKind::config, "set group.r or group.sparsity, not both");
    const double s = kv.num("group.sparsity", 0.1);
    require(s > 0.0 && s <= 1.0, ErrorKind::config, "group.sparsity must lie in (0, 1]");
    c.grouping.R = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(s * static_cast<double>(c.grouping.K))), 1, c.grouping.K);
  } else {
    c.grouping.R = kv.num("group.r", std::size_t{0});
  }
  if (c.grouping.R == 0) c.grouping.R = c.grouping.overlap();
  c.grouping.F = kv.num("group.f", c.grouping.F);
  c.grouping.kmeans_max_iters = kv.num("group.kmeans_iters", c.grouping.kmeans_max_iters);
  c.grouping.kmeans_restarts = kv.num("group.kmeans_restarts", c.grouping.kmeans_restarts);
  c.grouping.normalization = parse_row_normalization(kv.str("group.normalization", "l2"));
  c.grouping.eigs.tolerance = kv.num("eigs.tol", c.grouping.eigs.tolerance);
  c.grouping.eigs.max_iterations = kv.num("eigs.max_restarts", c.grouping.eigs.max_iterations);
  c.grouping.eigs.krylov_dim = kv.num("eigs.krylov", c.grouping.eigs.krylov_dim);
  c.grouping.seed = derive_seed(c.seed, 0x6709u);

  c.kind = parse_model_kind(kv.str("model.kind", "sw"));
  c.loss = parse_loss_kind(kv.str("model.loss", "bernoulli"));
  c.fc_hidden = kv.num("model.fc_hidden", c.fc_hidden);
  c.depth = kv.num("model.depth", c.depth);
  require(c.depth >= 1, ErrorKind::config, "model.depth must be >= 1");
  c.stack_k = kv.list<std::size_t>("model.stack_k", c.stack_k);
  require(c.stack_k.size() + 1 >= c.depth, ErrorKind::config, "model.stack_k needs one width per extra layer");
  c.finetune_epochs = kv.num("model.finetune_epochs", c.finetune_epochs);

  c.train.epochs = kv.num("train.epochs", c.train.epochs);
  c.train.batch_size = kv.num("train.batch", c.train.batch_size);
  c.train.learning_rate = kv.num("train.lr", c.train.learning_rate);
  c.train.adam_beta1 = kv.num("train.beta1", c.train.adam_beta1);
  c.train.adam_beta2 = kv.num("train.beta2", c.train.adam_beta2);
  c.train.adam_eps = kv.num("train.eps", c.train.adam_eps);
  c.train.lambda1 = kv.num("train.lambda1", c.train.lambda1);
  c.train.threads = kv.num("train.threads", c.train.threads);
  c.train.keep_best = kv.flag("train.keep_best", true);
  c.train.seed = derive_seed(c.seed, 0x7a11u);
  c.corruption.input_dropout_p = kv.num("train.input_dropout", c.corruption.input_dropout_p);
  c.corruption.hidden_dropout_p = kv.num("train.hidden_dropout", c.corruption.hidden_dropout_p);
  c.corruption.seed = derive_seed(c.seed, 0xc022u);
  c.track_norms = kv.flag("train.track_norms", c.track_norms);
  c.keep_fraction = kv.num("prune.keep_fraction", c.keep_fraction);
  c.retrain_epochs = kv.num("prune.retrain_epochs", c.retrain_epochs);

  c.cutoffs = kv.list<std::size_t>("eval.cutoffs", c.cutoffs);
  c.tie_seed = kv.num("eval.tie_seed", derive_seed(c.seed, 0x71eu));
  require(!(kv.has("eval.cold_start_quantile") && kv.has("eval.cold_start_k")), ErrorKind::config,
          "set at most one cold-start filter");
  if (kv.has("eval.cold_start_quantile"))
    c.cold_start = ColdStartFilter::bottom_quantile(kv.num("eval.cold_start_quantile", 0.2));
  if (kv.has("eval.cold_start_k"))
    c.cold_start = ColdStartFilter::count_at_most(kv.num("eval.cold_start_k", std::size_t{5}));

  c.out_dir = kv.str("run.out_dir", c.out_dir);
  c.cache_dir = kv.str("run.cache_dir", c.cache_dir);

  c.corruption.validate();
  c.train.validate();
  require(c.grouping.R >= 1 && c.grouping.R <= c.grouping.K, ErrorKind::config, "need 1 <= R <= K");
  return c;
}

inline nlohmann::json PipelineConfig::snapshot() const {
  nlohmann::json j;
  j["data"] = {{"source", source}, {"input", input}, {"format", format}, {"threshold", threshold},
               {"min_user_events", min_user_events}, {"min_item_users", min_item_users}};
  j["synth"] = {{"users", synth.n_users}, {"items", synth.m_items}, {"blocks", synth.n_blocks},
                {"pin", synth.within_block_p}, {"pout", synth.cross_block_p},
                {"overlap", synth.overlap_items_per_pair}, {"alpha", synth.popularity_alpha}, {"seed", synth.seed}};
  j["split"] = {{"val_users", val_users}, {"test_users", test_users}, {"fold_in", fold_in_fraction},
                {"use_existing", use_existing_split}};
  j["seed"] = seed;
  j["group"] = {{"algo", std::string(to_string(algo))}, {"k", grouping.K}, {"r", grouping.R}, {"f", grouping.F},
                {"kmeans_iters", grouping.kmeans_max_iters},
                {"kmeans_restarts", grouping.kmeans_restarts},
                {"normalization", std::string(to_string(grouping.normalization))}, {"seed", grouping.seed}};
  j["eigs"] = {{"tol", grouping.eigs.tolerance}, {"max_restarts", grouping.eigs.max_iterations},
               {"krylov", grouping.eigs.krylov_dim}};
  j["model"] = {{"kind", std::string(to_string(kind))}, {"loss", std::string(to_string(loss))},
                {"fc_hidden", fc_hidden}, {"depth", depth}, {"stack_k", stack_k},
                {"finetune_epochs", finetune_epochs}};
  j["train"] = config_echo(corruption, train, loss);
  j["train"]["threads"] = train.threads;
  j["train"]["track_norms"] = track_norms;
  j["prune"] = {{"keep_fraction", keep_fraction}, {"retrain_epochs", retrain_epochs}};
  j["eval"] = {{"cutoffs", cutoffs}, {"tie_seed", tie_seed}, {"cold_start", cold_start.describe()}};
  return j;
}

struct StageRecord {
  std::string name;
  std::string key;
  std::string dir;
  bool cache_hit = false;
  double seconds = 0.0;
  nlohmann::json artifacts = nlohmann::json::object();  // file -> content hash
};

struct PipelineResult {
  nlohmann::json manifest;
  std::string manifest_id;
  std::optional<EvalReport> val, test;
  std::optional<NormReport> norms;
  std::filesystem::path out_dir;
  std::size_t parameters = 0;
  std::size_t weights = 0;
  std::vector<StageRecord> stages;

  bool all_cached() const {
    for (const auto& s : stages)
      if (!s.cache_hit) return false;
    return !stages.empty();
  }
  const StageRecord* stage(const std::string& name) const {
    for (const auto& s : stages)
      if (s.name == name) return &s;
    return nullptr;
  }
};

namespace detail {

inline std::string hash_json(const nlohmann::json& j) {
  Fnv1a h;
  h.update(j.dump());
  return h.hex();
}

inline std::string hash_file(const std::filesystem::path& p) {
  Fnv1a h;
  h.update(io::read_file(p));
  return h.hex();
}

class StageRunner {
 public:
  StageRunner(std::filesystem::path cache, std::vector<StageRecord>& records) : cache_(std::move(cache)), records_(records) {}

  /// Run `body(dir)` unless `<cache>/<name>/<key>/.done` exists. Returns the
  /// stage directory.
  template <class Body>
  std::filesystem::path run(const std::string& name, const nlohmann::json& key_material, Body&& body) {
    StageRecord rec;
    rec.name = name;
    rec.key = hash_json(key_material);
    const auto dir = cache_ / name / rec.key;
    rec.dir = dir.string();
    const auto t0 = std::chrono::steady_clock::now();
    if (std::filesystem::exists(dir / ".done")) {
      rec.cache_hit = true;
    } else {
      std::filesystem::remove_all(dir);
      std::filesystem::create_directories(dir);
      try {
        body(dir);
      } catch (const Error&) {
        records_.push_back(rec);
        throw;
      }
      io::write_json(dir / "key.json", key_material);
      io::write_file(dir / ".done", rec.key + "\n");
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& f : std::filesystem::directory_iterator(dir)) {
      const auto fname = f.path().filename().string();
      if (fname == ".done" || fname == "key.json" || !f.is_regular_file()) continue;
      rec.artifacts[fname] = hash_file(f.path());
    }
    records_.push_back(rec);
    return dir;
  }

  const StageRecord& last() const { return records_.back(); }

 private:
  std::filesystem::path cache_;
  std::vector<StageRecord>& records_;
};

}  // namespace detail

/// Execute the pipeline. Reports and the model are copied into `out_dir`
/// next to `manifest.json`.
inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
  PipelineResult res;
  res.out_dir = cfg.out_dir;
  const std::filesystem::path cache = cfg.cache_dir.empty() ? res.out_dir / "cache" : std::filesystem::path(cfg.cache_dir);
  std::filesystem::create_directories(res.out_dir);
  detail::StageRunner runner(cache, res.stages);
  const nlohmann::json snap = cfg.snapshot();
  std::string fingerprint;

  auto write_partial = [&](const std::string& failed, const std::string& what) {
    nlohmann::json m;
    m["config"] = snap;
    m["failed_stage"] = failed;
    m["error"] = what;
    m["stages"] = nlohmann::json::array();
    for (const auto& s : res.stages) m["stages"].push_back({{"name", s.name}, {"key", s.key}, {"cache_hit", s.cache_hit}});
    io::write_json(res.out_dir / "manifest.json", m);
  };

  std::string current = "data";
  try {
    // --- data
    nlohmann::json data_key{{"stage", "data"}, {"data", snap["data"]}};
    if (cfg.source == "synth") data_key["synth"] = snap["synth"];
    if (cfg.source != "synth") {
      const std::filesystem::path in = cfg.input;
      require(!cfg.input.empty(), ErrorKind::config, "data.input is required for source " + cfg.source);
      data_key["input_hash"] = cfg.source == "dataset" ? detail::hash_file(in / "matrix.csr") : detail::hash_file(in);
    }
    const auto data_dir = runner.run("data", data_key, [&](const std::filesystem::path& dir) {
      Dataset d;
      if (cfg.source == "synth") {
        PlantedData p = generate(cfg.synth);
        d.matrix = std::move(p.matrix);
        io::write_json(dir / "truth.json", p.truth.to_json());
      } else if (cfg.source == "ingest") {
        const auto events = load_events(cfg.input, parse_input_format(cfg.format), cfg.threshold);
        d.matrix = build_matrix(events, cfg.min_user_events, cfg.min_item_users);
      } else {
        d = load_dataset(cfg.input);
      }
      save_dataset(dir, d);
    });
    Dataset data = load_dataset(data_dir);
    fingerprint = data.fingerprint();

    // --- split
    current = "split";
    const auto split_key = nlohmann::json{{"stage", "split"}, {"data", runner.last().key}, {"split", snap["split"]}, {"seed", cfg.seed}};
    const auto split_dir = runner.run("split", split_key, [&](const std::filesystem::path& dir) {
      SplitResult s;
      if (cfg.use_existing_split && data.split) {
        s = *data.split;
      } else {
        const std::size_t tenth = std::max<std::size_t>(1, data.matrix.n() / 10);
        s = split_users(data.matrix, cfg.val_users ? cfg.val_users : tenth, cfg.test_users ? cfg.test_users : tenth,
                        cfg.fold_in_fraction, derive_seed(cfg.seed, 0x5911u));
      }
      io::write_json(dir / "split.json", split_to_json(s));
    });
    const std::string split_hash = runner.last().key;
    const SplitResult split = split_from_json(io::read_json(split_dir / "split.json"));
    const InteractionMatrix& x = data.matrix;
    const std::size_t m = x.m();
    const std::size_t n_train = split.spec.train_users.size();
    const ExampleSource train_rows = ExampleSource::binary(x, split.spec.train_users);

    const std::size_t K = cfg.grouping.K, R = cfg.grouping.R;
    const bool saturated = R >= K;
    const bool needs_groups = cfg.kind == ModelKind::sw && !saturated;

    // --- embed + group
    std::string group_hash = "none";
    std::filesystem::path group_dir;
    if (needs_groups) {
      current = "embed";
      const nlohmann::json embed_key{{"stage", "embed"}, {"split", split_hash}, {"algo", snap["group"]["algo"]},
                                     {"f", cfg.grouping.F}, {"eigs", snap["eigs"]}, {"seed", cfg.grouping.seed}};
      const auto embed_dir = runner.run("embed", embed_key, [&](const std::filesystem::path& dir) {
        const InteractionMatrix xt = select_users(x, split.spec.train_users);
        const auto t0 = std::chrono::steady_clock::now();
        const SpectralEmbedding e = item_embedding(xt, cfg.grouping.F, cfg.algo, cfg.grouping.eigs, cfg.grouping.seed);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        {
          auto out = io::open_out(dir / "embedding.txt");
          write_embedding(out, e.coords);
        }
        io::write_json(dir / "spectrum.json",
                       {{"spectrum", std::vector<double>(e.spectrum.data(), e.spectrum.data() + e.spectrum.size())},
                        {"worst_residual", e.worst_residual},
                        {"matvecs", e.matvecs}});
        io::write_json(dir / "timing.json", {{"spectral_seconds", secs}});
      });
      current = "group";
      const nlohmann::json group_key{{"stage", "group"}, {"embed", runner.last().key}, {"group", snap["group"]}};
      group_dir = runner.run("group", group_key, [&](const std::filesystem::path& d) {
        SpectralEmbedding e;
        {
          auto in = io::open_in(embed_dir / "embedding.txt");
          e.coords = read_embedding(in);
        }
        e.m = static_cast<std::size_t>(e.coords.rows());
        e.F = static_cast<std::size_t>(e.coords.cols());
        require(e.m == m, ErrorKind::integrity, "cached embedding does not match the item count");
        const GroupingResult g = group_embedding(e, cfg.grouping, cfg.algo);
        nlohmann::json j = clusters_to_json(g.clusters);
        j["config"] = snap["group"];
        j["kmeans_iterations"] = g.kmeans_iterations;
        io::write_json(d / "clusters.json", j);
      });
      group_hash = runner.last().key;
    }

    // --- train
    current = "train";
    const nlohmann::json train_key{{"stage", "train"},       {"split", split_hash},     {"group", group_hash},
                                   {"group_cfg", snap["group"]}, {"model", snap["model"]}, {"train", snap["train"]},
                                   {"prune", snap["prune"]}, {"fingerprint", fingerprint}};
    const std::string manifest_id = detail::hash_json({{"config", snap}, {"fingerprint", fingerprint}});
    res.manifest_id = manifest_id;
    const auto train_dir = runner.run("train", train_key, [&](const std::filesystem::path& dir) {
      // Validation NDCG@100 after every epoch drives model selection.
      const std::vector<HeldOutUser>& val = split.val;
      TrainCallbacks<real_t> cb;
      if (!val.empty())
        cb.validate = [&](const SwDae<real_t>& mdl) {
          return evaluate(mdl, std::span<const HeldOutUser>(val), {100}, cfg.tie_seed).ndcg(100);
        };
      if (cfg.track_norms)
        cb.on_epoch = [&](const EpochLog& e, const SwDae<real_t>& mdl) {
          NormReport r = diagnose(mdl, n_train);
          r.epoch = e.epoch;
          r.manifest_id = manifest_id;
          io::write_json(dir / ("norms_epoch_" + std::to_string(e.epoch) + ".json"), r.to_json());
        };
      const std::uint64_t init_seed = derive_seed(cfg.seed, 0x1417u);
      SwDae<real_t> model;
      TrainResult log;
      nlohmann::json extra;
      switch (cfg.kind) {
        case ModelKind::sw: {
          ConnectivityMask mask;
          if (saturated) {
            mask = build_mask(saturated_clusters(m, K), m);
          } else {
            mask = build_mask(clusters_from_json(io::read_json(group_dir / "clusters.json")), m);
          }
          model = init_model<real_t>(mask, init_seed, cfg.loss);
          log = train(model, train_rows, cfg.corruption, cfg.train, cb);
          for (std::size_t l = 1; l < cfg.depth; ++l) {
            StackConfig sc;
            sc.grouping = cfg.grouping;
            sc.grouping.K = cfg.stack_k[l - 1];
            sc.grouping.R = 0;
            sc.grouping.F = std::min(cfg.grouping.F, model.code_width());
            sc.algo = cfg.algo;
            sc.corruption = cfg.corruption;
            sc.train = cfg.train;
            sc.train.keep_best = false;
            sc.finetune_epochs = l + 1 == cfg.depth ? cfg.finetune_epochs : 0;
            model = stack_layer(model, train_rows, sc);
          }
          break;
        }
        case ModelKind::fc:
        case ModelKind::l1reg: {
          const std::size_t width = cfg.fc_hidden ? cfg.fc_hidden : equal_parameter_width(m, K, R);
          TrainConfig tc = cfg.train;
          if (cfg.kind == ModelKind::fc) tc.lambda1 = 0.0;
          model = init_fc<real_t>(m, width, init_seed, cfg.loss);
          log = train(model, train_rows, cfg.corruption, tc, cb);
          extra["fc_hidden"] = width;
          break;
        }
        case ModelKind::prune: {
          const std::size_t width = cfg.fc_hidden ? cfg.fc_hidden : K;
          TrainConfig tc = cfg.train;
          tc.lambda1 = 0.0;
          SwDae<real_t> fc = init_fc<real_t>(m, width, init_seed, cfg.loss);
          TrainResult base_log = train(fc, train_rows, cfg.corruption, tc, cb);
          PruneConfig pc;
          pc.keep_fraction = cfg.keep_fraction > 0.0 ? cfg.keep_fraction
                                                     : static_cast<double>(R) / static_cast<double>(K);
          pc.retrain_epochs = cfg.retrain_epochs;
          PruneOutcome outcome;
          model = prune_and_retrain(fc, pc, train_rows, cfg.corruption, tc, cb, &outcome, &log);
          extra["fc_hidden"] = width;
          extra["keep_fraction"] = pc.keep_fraction;
          extra["prune_warnings"] = outcome.warnings;
          extra["base_log"] = train_log_json(cfg.corruption, tc, cfg.loss, base_log);
          break;
        }
      }
      model.manifest_id = manifest_id;
      save_model(dir / "model.bin", model);
      nlohmann::json jl = train_log_json(cfg.corruption, cfg.train, cfg.loss, log);
      jl["manifest"] = manifest_id;
      if (!extra.empty()) jl["extra"] = extra;
      std::uint64_t enc = 0, dec = 0;
      for (const auto& L : model.layers) {
        enc += L.encoder->nnz();
        dec += L.decoder->nnz();
      }
      const auto pc = count_parameters(enc, dec, m, model.layers.front().hidden());
      jl["weights"] = pc.weights;
      jl["parameters"] = pc.parameters;
      jl["flops_per_example"] = pc.flops_per_example;
      io::write_json(dir / "train_log.json", jl);
    });
    const std::string train_hash = runner.last().key;
    const SwDae<real_t> model = load_model<real_t>(train_dir / "model.bin");
    {
      const auto jl = io::read_json(train_dir / "train_log.json");
      res.weights = jl.at("weights").get<std::size_t>();
      res.parameters = jl.at("parameters").get<std::size_t>();
    }

    // --- eval
    current = "eval";
    const nlohmann::json eval_key{{"stage", "eval"}, {"train", train_hash}, {"eval", snap["eval"]}};
    const auto eval_dir = runner.run("eval", eval_key, [&](const std::filesystem::path& dir) {
      auto run_eval = [&](const std::vector<HeldOutUser>& users, const std::string& file) {
        if (users.empty()) return;
        const std::vector<HeldOutUser> sel = cold_start_filter(users, cfg.cold_start);
        EvalReport r = evaluate(model, std::span<const HeldOutUser>(sel), cfg.cutoffs, cfg.tie_seed);
        r.cold_start = cfg.cold_start.describe();
        r.manifest_id = manifest_id;
        io::write_json(dir / file, r.to_json());
      };
      run_eval(split.val, "eval_val.json");
      run_eval(split.test, "eval_test.json");
    });
    auto load_report = [&](const std::filesystem::path& p) -> std::optional<EvalReport> {
      if (!std::filesystem::exists(p)) return std::nullopt;
      const auto j = io::read_json(p);
      EvalReport r;
      r.cutoffs = j.at("cutoffs").get<std::vector<std::size_t>>();
      for (std::size_t c : r.cutoffs) {
        r.mean_recall.push_back(j.at("mean").at("recall@" + std::to_string(c)).get<double>());
        r.mean_ndcg.push_back(j.at("mean").at("ndcg@" + std::to_string(c)).get<double>());
      }
      for (const auto& u : j.at("per_user")) {
        UserMetrics um;
        um.user = u.at("user").get<index_t>();
        um.fold_in_size = u.at("fold_in").get<std::size_t>();
        um.holdout_size = u.at("holdout").get<std::size_t>();
        um.recall = u.at("recall").get<std::vector<double>>();
        um.ndcg = u.at("ndcg").get<std::vector<double>>();
        r.users.push_back(std::move(um));
      }
      r.cold_start = j.value("cold_start", "none");
      r.tie_seed = j.value("tie_seed", std::uint64_t{0});
      r.manifest_id = j.value("manifest", std::string());
      return r;
    };
    res.val = load_report(eval_dir / "eval_val.json");
    res.test = load_report(eval_dir / "eval_test.json");

    // --- diagnose
    current = "diagnose";
    const nlohmann::json diag_key{{"stage", "diagnose"}, {"train", train_hash}, {"n", n_train}};
    const auto diag_dir = runner.run("diagnose", diag_key, [&](const std::filesystem::path& dir) {
      NormReport r = diagnose(model, n_train);
      r.manifest_id = manifest_id;
      io::write_json(dir / "norms.json", r.to_json());
    });
    {
      const auto j = io::read_json(diag_dir / "norms.json");
      NormReport r;
      r.n = j.at("n").get<std::size_t>();
      r.bound = j.at("bound").get<double>();
      r.all_converged = j.at("all_converged").get<bool>();
      for (const auto& l : j.at("layers")) {
        MatrixNorms mn;
        mn.name = l.at("name").get<std::string>();
        mn.rows = l.at("rows").get<std::size_t>();
        mn.cols = l.at("cols").get<std::size_t>();
        mn.spectral_norm = l.at("spectral_norm").get<double>();
        mn.frobenius_norm = l.at("frobenius_norm").get<double>();
        mn.stable_rank = l.at("stable_rank").get<double>();
        mn.converged = l.at("converged").get<bool>();
        r.layers.push_back(mn);
      }
      res.norms = r;
    }

    // --- publish
    auto publish = [&](const std::filesystem::path& from) {
      if (std::filesystem::exists(from))
        std::filesystem::copy_file(from, res.out_dir / from.filename(), std::filesystem::copy_options::overwrite_existing);
    };
    publish(train_dir / "model.bin");
    publish(train_dir / "train_log.json");
    publish(eval_dir / "eval_val.json");
    publish(eval_dir / "eval_test.json");
    publish(diag_dir / "norms.json");
    if (!group_dir.empty()) publish(group_dir / "clusters.json");
  } catch (const Error& e) {
    Error tagged(e.kind(), "stage " + current + ": " + e.message());
    write_partial(current, tagged.what());
    throw tagged;
  }

  nlohmann::json m;
  m["id"] = res.manifest_id;
  m["version"] = std::string(kVersion);
  m["config"] = snap;
  m["seeds"] = {{"master", cfg.seed},       {"synth", cfg.synth.seed},         {"grouping", cfg.grouping.seed},
                {"train", cfg.train.seed},  {"corruption", cfg.corruption.seed}, {"tie", cfg.tie_seed}};
  m["dataset_fingerprint"] = fingerprint;
  m["stages"] = nlohmann::json::array();
  nlohmann::json timings;
  for (const auto& s : res.stages) {
    m["stages"].push_back({{"name", s.name}, {"key", s.key}, {"dir", s.dir}, {"cache_hit", s.cache_hit},
                           {"artifacts", s.artifacts}});
    timings[s.name] = s.seconds;
  }
  m["timings_seconds"] = timings;
  m["weights"] = res.weights;
  m["parameters"] = res.parameters;
  io::write_json(res.out_dir / "manifest.json", m);
  res.manifest = std::move(m);
  return res;
}

// ---------------------------------------------------------------------------
// Sweeps.

enum class SweepAxis { sparsity, width, lambda1, keep_fraction };

inline SweepAxis parse_sweep_axis(std::string_view s) {
  if (s == "sparsity") return SweepAxis::sparsity;
  if (s == "width") return SweepAxis::width;
  if (s == "lambda1") return SweepAxis::lambda1;
  if (s == "keep_fraction") return SweepAxis::keep_fraction;
  throw Error(ErrorKind::config, "unknown sweep axis '" + std::string(s) + "'");
}

inline std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::sparsity: return "sparsity";
    case SweepAxis::width: return "width";
    case SweepAxis::lambda1: return "lambda1";
    default: return "keep_fraction";
  }
}

struct SweepSpec {
  SweepAxis axis = SweepAxis::sparsity;
  std::vector<double> values;
  std::vector<std::uint64_t> seeds{42};

  /// Sorted, de-duplicated grid.
  std::vector<double> grid() const {
    std::vector<double> g = values;
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    return g;
  }
};

struct SweepRow {
  double value = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double val_ndcg100 = 0.0, test_ndcg100 = 0.0, test_recall20 = 0.0, test_recall50 = 0.0;
  std::size_t parameters = 0;
  std::string manifest_id;
};

struct SweepTable {
  SweepAxis axis = SweepAxis::sparsity;
  std::vector<SweepRow> rows;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["axis"] = std::string(to_string(axis));
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows)
      j["rows"].push_back({{"value", r.value}, {"seed", r.seed}, {"ok", r.ok}, {"error", r.error},
                           {"val_ndcg100", r.val_ndcg100}, {"test_ndcg100", r.test_ndcg100},
                           {"test_recall20", r.test_recall20}, {"test_recall50", r.test_recall50},
                           {"parameters", r.parameters}, {"manifest", r.manifest_id}});
    return j;
  }

  std::string to_csv() const {
    std::ostringstream s;
    s << to_string(axis) << ",seed,ok,val_ndcg100,test_ndcg100,test_recall20,test_recall50,parameters,error\n";
    char buf[256];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%.6g,%llu,%d,%.6f,%.6f,%.6f,%.6f,%zu,", r.value,
                    static_cast<unsigned long long>(r.seed), r.ok ? 1 : 0, r.val_ndcg100, r.test_ndcg100,
                    r.test_recall20, r.test_recall50, r.parameters);
      std::string err = r.error;
      std::replace(err.begin(), err.end(), ',', ';');
      std::replace(err.begin(), err.end(), '\n', ' ');
      s << buf << err << '\n';
    }
    return s.str();
  }
};

/// One pipeline run per grid value and seed. Runs share the base cache
/// directory so unchanged upstream stages are reused; a failing point is
/// recorded and the sweep continues.
inline SweepTable run_sweep(const SweepSpec& sweep, const KeyValues& base) {
  require(!sweep.values.empty(), ErrorKind::config, "sweep grid is empty");
  require(!sweep.seeds.empty(), ErrorKind::config, "sweep needs at least one seed");
  const PipelineConfig base_cfg = PipelineConfig::from(base);
  const std::filesystem::path root = base_cfg.out_dir;
  const std::string cache = base_cfg.cache_dir.empty() ? (root / "cache").string() : base_cfg.cache_dir;
  SweepTable table;
  table.axis = sweep.axis;
  for (double v : sweep.grid()) {
    for (std::uint64_t seed : sweep.seeds) {
      SweepRow row;
      row.value = v;
      row.seed = seed;
      KeyValues kv = base;
      kv.set("seed", std::to_string(seed));
      char tag[64];
      std::snprintf(tag, sizeof tag, "%s_%.6g_seed%llu", std::string(to_string(sweep.axis)).c_str(), v,
                    static_cast<unsigned long long>(seed));
      kv.set("run.out_dir", (root / tag).string());
      kv.set("run.cache_dir", cache);
      char val[64];
      std::snprintf(val, sizeof val, "%.17g", v);
      switch (sweep.axis) {
        case SweepAxis::sparsity:
          kv.set("group.sparsity", val);
          if (kv.has("group.r")) {
            auto copy = kv.values();
            copy.erase("group.r");
            KeyValues fresh;
            for (const auto& [k, x] : copy) fresh.set(k, x);
            kv = fresh;
          }
          break;
        case SweepAxis::width: kv.set(base_cfg.kind == ModelKind::sw ? "group.k" : "model.fc_hidden", std::to_string(std::llround(v))); break;
        case SweepAxis::lambda1: kv.set("train.lambda1", val); break;
        case SweepAxis::keep_fraction: kv.set("prune.keep_fraction", val); break;
      }
      try {
        const PipelineResult r = run_pipeline(PipelineConfig::from(kv));
        row.ok = true;
        row.manifest_id = r.manifest_id;
        row.parameters = r.parameters;
        if (r.val) row.val_ndcg100 = r.val->ndcg(100);
        if (r.test) {
          row.test_ndcg100 = r.test->ndcg(100);
          row.test_recall20 = r.test->recall(20);
          row.test_recall50 = r.test->recall(50);
        }
      } catch (const Error& e) {
        row.error = e.what();
      }
      table.rows.push_back(row);
    }
  }
  io::write_json(root / "sweep.json", table.to_json());
  io::write_file(root / "sweep.csv", table.to_csv());
  return table;
}

}  // namespace swrec
