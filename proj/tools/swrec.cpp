// Command-line front end. Every subcommand reads and writes the documented
// artifact formats; errors map to distinct exit codes (see ErrorKind).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "swrec/swrec.hpp"

namespace fs = std::filesystem;
using namespace swrec;

namespace {

struct TrainFlags {
  std::string dataset;
  std::string out = "model.bin";
  std::string log;
  std::size_t epochs = 100;
  double lr = 1e-3;
  std::size_t batch = 500;
  double input_dropout = 0.6;
  double hidden_dropout = 0.2;
  std::string loss = "bernoulli";
  std::uint64_t seed = 13;
  std::size_t threads = 1;
  bool keep_best = false;
  bool track_norms = false;
  std::string norms_dir;

  void add_to(CLI::App* app) {
    app->add_option("--dataset", dataset, "Dataset directory")->required();
    app->add_option("--out", out, "Output model file");
    app->add_option("--log", log, "Training log JSON (default: <out>.log.json)");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--batch", batch, "Mini-batch size");
    app->add_option("--input-dropout", input_dropout, "Input dropout probability");
    app->add_option("--hidden-dropout", hidden_dropout, "Hidden dropout probability");
    app->add_option("--loss", loss, "bernoulli or multinomial");
    app->add_option("--seed", seed, "Seed for initialization, shuffling and corruption");
    app->add_option("--threads", threads, "Worker threads (results do not depend on it)");
    app->add_flag("--keep-best", keep_best, "Keep the epoch with the best validation NDCG@100");
    app->add_flag("--track-norms", track_norms, "Write norms_epoch_*.json after every epoch");
    app->add_option("--norms-dir", norms_dir, "Directory for per-epoch norm reports (default: next to --out)");
  }

  CorruptionConfig corruption() const {
    CorruptionConfig c;
    c.input_dropout_p = input_dropout;
    c.hidden_dropout_p = hidden_dropout;
    c.seed = derive_seed(seed, 0xc022u);
    c.validate();
    return c;
  }

  TrainConfig train() const {
    TrainConfig t;
    t.epochs = epochs;
    t.learning_rate = lr;
    t.batch_size = batch;
    t.seed = derive_seed(seed, 0x7a11u);
    t.threads = threads;
    t.keep_best = keep_best;
    t.validate();
    return t;
  }

  std::uint64_t init_seed() const { return derive_seed(seed, 0x1417u); }
  std::string log_path() const { return log.empty() ? out + ".log.json" : log; }
};

struct Loaded {
  Dataset data;
  std::vector<index_t> train_users;
};

Loaded load(const std::string& dir) {
  Loaded l;
  l.data = load_dataset(dir);
  l.train_users = training_users(l.data);
  require(!l.train_users.empty(), ErrorKind::empty_dataset, "dataset has no training users");
  return l;
}

TrainCallbacks<real_t> callbacks(const TrainFlags& f, const Loaded& l) {
  TrainCallbacks<real_t> cb;
  if (l.data.split && !l.data.split->val.empty()) {
    const auto* val = &l.data.split->val;
    cb.validate = [val](const SwDae<real_t>& m) {
      return evaluate(m, std::span<const HeldOutUser>(*val), {100}, 0).ndcg(100);
    };
  }
  if (f.track_norms) {
    const fs::path dir = f.norms_dir.empty() ? fs::path(f.out).parent_path() : fs::path(f.norms_dir);
    if (!dir.empty()) fs::create_directories(dir);
    const std::size_t n = l.train_users.size();
    cb.on_epoch = [dir, n](const EpochLog& e, const SwDae<real_t>& m) {
      NormReport r = diagnose(m, n);
      r.epoch = e.epoch;
      io::write_json(dir / ("norms_epoch_" + std::to_string(e.epoch) + ".json"), r.to_json());
    };
  }
  return cb;
}

void finish(const TrainFlags& f, SwDae<real_t>& model, const TrainResult& r, nlohmann::json extra = {}) {
  save_model(f.out, model);
  auto j = train_log_json(f.corruption(), f.train(), parse_loss_kind(f.loss), r);
  std::uint64_t enc = 0, dec = 0;
  for (const auto& L : model.layers) {
    enc += L.encoder->nnz();
    dec += L.decoder->nnz();
  }
  const auto pc = count_parameters(enc, dec, model.m(), model.layers.front().hidden());
  j["weights"] = pc.weights;
  j["parameters"] = pc.parameters;
  if (!extra.is_null()) j["extra"] = extra;
  io::write_json(f.log_path(), j);
  std::printf("wrote %s (%zu parameters)\n", f.out.c_str(), static_cast<std::size_t>(pc.parameters));
}

void print_json(const nlohmann::json& j, const std::string& out) {
  if (out.empty() || out == "-")
    std::cout << j.dump(2) << '\n';
  else
    io::write_json(out, j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-and-wide denoising autoencoder recommender"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // ingest
  std::string in_path, in_format = "csv", out_path;
  double threshold = 4.0;
  std::size_t min_user = 5, min_item = 0, n_val = 0, n_test = 0;
  double fold_in = 0.8;
  std::uint64_t split_seed = 1;
  auto* ingest = app.add_subcommand("ingest", "Parse an event file into a dataset directory");
  ingest->add_option("--input", in_path, "Event file (user,item,value)")->required();
  ingest->add_option("--format", in_format, "csv or tsv");
  ingest->add_option("--threshold", threshold, "Keep events with value >= threshold");
  ingest->add_option("--min-user-events", min_user, "Drop users with fewer items");
  ingest->add_option("--min-item-users", min_item, "Drop items with fewer users");
  ingest->add_option("--val-users", n_val, "Validation users (default: a tenth)");
  ingest->add_option("--test-users", n_test, "Test users (default: a tenth)");
  ingest->add_option("--fold-in", fold_in, "Fold-in fraction for held-out users");
  ingest->add_option("--split-seed", split_seed, "Seed of the user split");
  ingest->add_option("--out", out_path, "Dataset directory")->required();

  // synth
  PlantedSpec ps;
  auto* synth = app.add_subcommand("synth", "Generate planted-block data");
  synth->add_option("--users", ps.n_users);
  synth->add_option("--items", ps.m_items);
  synth->add_option("--blocks", ps.n_blocks);
  synth->add_option("--pin", ps.within_block_p, "Within-block consumption probability");
  synth->add_option("--pout", ps.cross_block_p, "Cross-block consumption probability");
  synth->add_option("--overlap", ps.overlap_items_per_pair, "Items shared by consecutive blocks");
  synth->add_option("--alpha", ps.popularity_alpha, "Popularity exponent (0 disables)");
  synth->add_option("--seed", ps.seed);
  synth->add_option("--val-users", n_val);
  synth->add_option("--test-users", n_test);
  synth->add_option("--fold-in", fold_in);
  synth->add_option("--out", out_path, "Dataset directory")->required();

  // graph / embed / group
  std::string dataset_dir, algo = "laplacian", normalization = "l2";
  std::size_t F = 50, K = 1000, R = 0, kmeans_iters = 100, kmeans_restarts = 20;
  std::uint64_t group_seed = 7;
  auto* graph = app.add_subcommand("graph", "Dump the normalized co-occurrence matrix as triplets");
  graph->add_option("--dataset", dataset_dir)->required();
  graph->add_option("--out", out_path)->required();

  auto* embed = app.add_subcommand("embed", "Spectral item embedding (text matrix)");
  embed->add_option("--dataset", dataset_dir)->required();
  embed->add_option("--algo", algo, "laplacian or svd");
  embed->add_option("--f", F, "Embedding dimension");
  embed->add_option("--seed", group_seed);
  embed->add_option("--out", out_path)->required();

  auto* group = app.add_subcommand("group", "Overlapping item clusters");
  group->add_option("--dataset", dataset_dir)->required();
  group->add_option("--algo", algo, "laplacian or svd");
  group->add_option("--k", K, "Number of clusters / hidden neurons");
  group->add_option("--r", R, "Clusters per item (default: K/10)");
  group->add_option("--f", F, "Embedding dimension");
  group->add_option("--kmeans-iters", kmeans_iters);
  group->add_option("--kmeans-restarts", kmeans_restarts, "independent k-means seedings");
  group->add_option("--normalization", normalization, "l2 or row_sum");
  group->add_option("--seed", group_seed);
  group->add_option("--out", out_path, "Clusters JSON")->required();

  // mask-stats
  std::string clusters_path, model_path;
  auto* mask_stats = app.add_subcommand("mask-stats", "Density, degree histogram, parameter and flop counts");
  mask_stats->add_option("--clusters", clusters_path, "Clusters JSON");
  mask_stats->add_option("--model", model_path, "Model file");

  // train
  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "Train a SW-DAE on a cluster mask");
  tf.add_to(train_cmd);
  train_cmd->add_option("--clusters", clusters_path, "Clusters JSON")->required();

  // eval
  std::string split_name = "test", cutoffs_str = "20,50,100";
  double cold_q = 0.0;
  std::size_t cold_k = 0;
  std::uint64_t tie_seed = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Recall and NDCG on held-out users");
  eval_cmd->add_option("--model", model_path)->required();
  eval_cmd->add_option("--dataset", dataset_dir)->required();
  eval_cmd->add_option("--split", split_name, "val or test");
  eval_cmd->add_option("--cutoffs", cutoffs_str, "Comma-separated cutoffs");
  eval_cmd->add_option("--cold-start-quantile", cold_q, "Keep the bottom quantile by fold-in size");
  eval_cmd->add_option("--cold-start-k", cold_k, "Keep users with at most k fold-in items");
  eval_cmd->add_option("--tie-seed", tie_seed);
  eval_cmd->add_option("--out", out_path, "Report JSON (default: stdout)");

  // diagnose
  std::size_t n_train = 0;
  auto* diag = app.add_subcommand("diagnose", "Spectral norms, stable ranks and bound");
  diag->add_option("--model", model_path)->required();
  diag->add_option("--n", n_train, "Number of training users")->required();
  diag->add_option("--out", out_path, "Report JSON (default: stdout)");

  // baselines
  auto* baseline = app.add_subcommand("baseline", "Fully connected, pruned or L1-regularized baselines");
  baseline->require_subcommand(1);
  std::size_t hidden = 0;
  double keep_fraction = 0.1, lambda1 = 1e-3;
  std::size_t retrain_epochs = 100;
  TrainFlags bf_fc, bf_prune, bf_l1;
  auto add_width = [&](CLI::App* a) {
    a->add_option("--hidden", hidden, "Hidden width");
    a->add_option("--k", K, "SW width to match (with --r)");
    a->add_option("--r", R, "SW overlap to match");
  };
  auto* b_fc = baseline->add_subcommand("fc", "Fully connected DAE");
  bf_fc.add_to(b_fc);
  add_width(b_fc);
  auto* b_prune = baseline->add_subcommand("prune", "Magnitude pruning of a trained FC-DAE, then retraining");
  bf_prune.add_to(b_prune);
  add_width(b_prune);
  b_prune->add_option("--keep-fraction", keep_fraction, "Fraction of weights kept");
  b_prune->add_option("--retrain-epochs", retrain_epochs);
  auto* b_l1 = baseline->add_subcommand("l1reg", "FC-DAE with an L1 penalty on hidden activations");
  bf_l1.add_to(b_l1);
  add_width(b_l1);
  b_l1->add_option("--lambda1", lambda1, "L1 weight");

  // pipeline / sweep
  std::string config_path;
  std::vector<std::string> overrides;
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage from a key=value config");
  pipeline->add_option("--config", config_path, "Config file");
  pipeline->add_option("--set", overrides, "key=value override (repeatable)");

  std::string axis = "sparsity", grid_str, seeds_str = "42";
  auto* sweep = app.add_subcommand("sweep", "One pipeline run per grid value and seed");
  sweep->add_option("--config", config_path, "Base config file");
  sweep->add_option("--set", overrides, "key=value override (repeatable)");
  sweep->add_option("--axis", axis, "sparsity, width, lambda1 or keep_fraction");
  sweep->add_option("--grid", grid_str, "Comma-separated values")->required();
  sweep->add_option("--seeds", seeds_str, "Comma-separated seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::config);
  }

  auto width_for = [&](std::size_t m) -> std::size_t {
    if (hidden) return hidden;
    require(R > 0, ErrorKind::config, "give --hidden, or --k and --r to match a sparse model");
    return equal_parameter_width(m, K, R);
  };

  try {
    if (*ingest || *synth) {
      Dataset d;
      if (*ingest) {
        d.matrix = build_matrix(load_events(in_path, parse_input_format(in_format), threshold), min_user, min_item);
      } else {
        PlantedData p = generate(ps);
        d.matrix = std::move(p.matrix);
        fs::create_directories(out_path);
        io::write_json(fs::path(out_path) / "truth.json", p.truth.to_json());
        split_seed = derive_seed(ps.seed, 0x5911u);
      }
      const std::size_t tenth = std::max<std::size_t>(1, d.matrix.n() / 10);
      d.split = split_users(d.matrix, n_val ? n_val : tenth, n_test ? n_test : tenth, fold_in, split_seed);
      save_dataset(out_path, d);
      std::printf("wrote %s: %zu users, %zu items, %zu interactions\n", out_path.c_str(), d.matrix.n(), d.matrix.m(),
                  d.matrix.nnz());
    } else if (*graph) {
      const Loaded l = load(dataset_dir);
      const auto lap = build_laplacian(build_cooccurrence(select_users(l.data.matrix, l.train_users)));
      auto out = io::open_out(out_path);
      write_triplets(out, lap.matrix);
    } else if (*embed) {
      const Loaded l = load(dataset_dir);
      const auto e = item_embedding(select_users(l.data.matrix, l.train_users), F, parse_spectral_algo(algo),
                                    EigsConfig{}, group_seed);
      auto out = io::open_out(out_path);
      write_embedding(out, e.coords);
    } else if (*group) {
      const Loaded l = load(dataset_dir);
      GroupingConfig g;
      g.K = K;
      g.R = R;
      g.F = F;
      g.kmeans_max_iters = kmeans_iters;
      g.kmeans_restarts = kmeans_restarts;
      g.normalization = parse_row_normalization(normalization);
      g.seed = group_seed;
      const auto res = item_grouping(select_users(l.data.matrix, l.train_users), g, parse_spectral_algo(algo));
      nlohmann::json j = clusters_to_json(res.clusters);
      j["config"] = {{"algo", algo}, {"k", g.K}, {"r", g.overlap()}, {"f", g.F}, {"seed", g.seed},
                     {"normalization", normalization}};
      j["kmeans_iterations"] = res.kmeans_iterations;
      io::write_json(out_path, j);
      std::printf("wrote %s (K=%zu, R=%zu, %zu empty clusters)\n", out_path.c_str(), g.K, g.overlap(),
                  res.clusters.empty_clusters.size());
    } else if (*mask_stats) {
      require(clusters_path.empty() != model_path.empty(), ErrorKind::config, "give exactly one of --clusters, --model");
      nlohmann::json j;
      if (!clusters_path.empty()) {
        const auto c = clusters_from_json(io::read_json(clusters_path));
        const auto mask = build_mask(c, c.m);
        const auto pc = count_parameters(mask);
        nlohmann::json hist;
        for (auto [deg, count] : neuron_degree_histogram(mask.pattern)) hist[std::to_string(deg)] = count;
        j = {{"m", mask.m()}, {"K", mask.K()}, {"R", mask.R}, {"density", mask.density()},
             {"neuron_degree_histogram", hist}, {"weights", pc.weights}, {"parameters", pc.parameters},
             {"flops_per_example", pc.flops_per_example}};
      } else {
        const auto model = load_model<real_t>(model_path);
        j["layers"] = nlohmann::json::array();
        std::uint64_t enc = 0, dec = 0;
        for (const auto& L : model.layers) {
          nlohmann::json hist;
          for (auto [deg, count] : neuron_degree_histogram(*L.encoder)) hist[std::to_string(deg)] = count;
          j["layers"].push_back({{"in", L.in()}, {"K", L.hidden()}, {"density", L.encoder->density()},
                                 {"neuron_degree_histogram", hist}});
          enc += L.encoder->nnz();
          dec += L.decoder->nnz();
        }
        const auto pc = count_parameters(enc, dec, model.m(), model.layers.front().hidden());
        j["weights"] = pc.weights;
        j["parameters"] = pc.parameters;
        j["flops_per_example"] = pc.flops_per_example;
      }
      std::cout << j.dump(2) << '\n';
    } else if (*train_cmd) {
      const Loaded l = load(tf.dataset);
      const auto c = clusters_from_json(io::read_json(clusters_path));
      require(c.m == l.data.matrix.m(), ErrorKind::integrity, "clusters and dataset disagree on the item count");
      auto model = init_model<real_t>(build_mask(c, c.m), tf.init_seed(), parse_loss_kind(tf.loss));
      const auto r = train(model, ExampleSource::binary(l.data.matrix, l.train_users), tf.corruption(), tf.train(),
                           callbacks(tf, l));
      finish(tf, model, r);
    } else if (*baseline) {
      if (*b_fc || *b_l1) {
        const TrainFlags& f = *b_fc ? bf_fc : bf_l1;
        const Loaded l = load(f.dataset);
        const std::size_t w = width_for(l.data.matrix.m());
        TrainConfig t = f.train();
        t.lambda1 = *b_l1 ? lambda1 : 0.0;
        auto model = init_fc<real_t>(l.data.matrix.m(), w, f.init_seed(), parse_loss_kind(f.loss));
        const auto r = train(model, ExampleSource::binary(l.data.matrix, l.train_users), f.corruption(), t,
                             callbacks(f, l));
        finish(f, model, r, {{"hidden", w}, {"lambda1", t.lambda1}});
      } else {
        const Loaded l = load(bf_prune.dataset);
        const std::size_t w = hidden ? hidden : K;
        const auto data = ExampleSource::binary(l.data.matrix, l.train_users);
        const auto cb = callbacks(bf_prune, l);
        auto fc = init_fc<real_t>(l.data.matrix.m(), w, bf_prune.init_seed(), parse_loss_kind(bf_prune.loss));
        train(fc, data, bf_prune.corruption(), bf_prune.train(), cb);
        PruneConfig pc{keep_fraction, retrain_epochs};
        PruneOutcome outcome;
        TrainResult r;
        auto model = prune_and_retrain(fc, pc, data, bf_prune.corruption(), bf_prune.train(), cb, &outcome, &r);
        for (const auto& w_msg : outcome.warnings) std::fprintf(stderr, "warning: %s\n", w_msg.c_str());
        finish(bf_prune, model, r, {{"hidden", w}, {"keep_fraction", keep_fraction}, {"warnings", outcome.warnings}});
      }
    } else if (*eval_cmd) {
      const auto model = load_model<real_t>(model_path);
      const Dataset d = load_dataset(dataset_dir);
      const SplitResult& s = d.require_split();
      require(split_name == "val" || split_name == "test", ErrorKind::config, "--split must be val or test");
      const auto& users = split_name == "val" ? s.val : s.test;
      require(!(cold_q > 0.0 && cold_k > 0), ErrorKind::config, "give at most one cold-start filter");
      ColdStartFilter f;
      if (cold_q > 0.0) f = ColdStartFilter::bottom_quantile(cold_q);
      if (cold_k > 0) f = ColdStartFilter::count_at_most(cold_k);
      const auto sel = cold_start_filter(users, f);
      KeyValues kv;
      kv.set("cutoffs", cutoffs_str);
      auto r = evaluate(model, std::span<const HeldOutUser>(sel), kv.list<std::size_t>("cutoffs", {}), tie_seed);
      r.cold_start = f.describe();
      r.manifest_id = model.manifest_id;
      print_json(r.to_json(), out_path);
    } else if (*diag) {
      const auto model = load_model<real_t>(model_path);
      print_json(diagnose(model, n_train).to_json(), out_path);
    } else if (*pipeline || *sweep) {
      KeyValues kv = config_path.empty() ? KeyValues{} : KeyValues::load(config_path);
      for (const auto& o : overrides) kv.set(o);
      if (*pipeline) {
        const auto r = run_pipeline(PipelineConfig::from(kv));
        std::size_t hits = 0;
        for (const auto& s : r.stages) hits += s.cache_hit ? 1 : 0;
        std::printf("manifest %s: %zu stages (%zu cached)\n", r.manifest_id.c_str(), r.stages.size(), hits);
        if (r.test) std::printf("test ndcg@100 %.6f  recall@20 %.6f\n", r.test->ndcg(100), r.test->recall(20));
      } else {
        KeyValues lists;
        lists.set("grid", grid_str);
        lists.set("seeds", seeds_str);
        SweepSpec spec;
        spec.axis = parse_sweep_axis(axis);
        spec.values = lists.list<double>("grid", {});
        spec.seeds = lists.list<std::uint64_t>("seeds", {});
        const auto table = run_sweep(spec, kv);
        std::cout << table.to_csv();
      }
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "swrec: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "swrec: internal error: %s\n", e.what());
    return 1;
  }
  return 0;
}
