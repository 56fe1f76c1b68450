#include "bgnn/cli.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bgnn/error.hpp"

namespace bgnn::cli {
namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

double parse_double_value(const std::string& key, const std::string& value) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size() || !std::isfinite(v)) {
    throw Error::config("config key '" + key + "': invalid number '" + value + "'");
  }
  return v;
}

template <typename Int>
Int parse_int_value(const std::string& key, const std::string& value) {
  Int v{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw Error::config("config key '" + key + "': invalid integer '" + value + "'");
  }
  return v;
}

bool parse_bool_value(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error::config("config key '" + key + "': expected true/false, got '" + value + "'");
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error::io("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw Error::io("failed writing '" + path + "'");
}

void write_matrix_csv(const std::string& path, const Tensor& t) {
  std::string buf;
  for (int i = 0; i < t.rows(); ++i) {
    for (int j = 0; j < t.cols(); ++j) {
      if (j) buf.push_back(',');
      buf += format_double(t.at(i, j));
    }
    buf.push_back('\n');
  }
  write_text_file(path, buf);
}

}  // namespace

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error::io("cannot open config file '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string trimmed = line;
    trimmed.erase(0, trimmed.find_first_not_of(" \t"));
    if (trimmed.empty() || trimmed[0] == '#') continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw Error::config("config line " + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trimmed.substr(0, eq);
    std::string value = trimmed.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    value.erase(value.find_last_not_of(" \t") + 1);
    if (key.empty()) {
      throw Error::config("config line " + std::to_string(line_no) + ": empty key");
    }
    kv[key] = value;
  }
  return kv;
}

void apply_config(const std::map<std::string, std::string>& kv, train::TrainConfig& cfg,
                  RunPaths& paths) {
  for (const auto& [key, value] : kv) {
    if (key == "dim") cfg.dim = parse_int_value<int>(key, value);
    else if (key == "layers") cfg.layers = parse_int_value<int>(key, value);
    else if (key == "dropout") cfg.dropout = parse_double_value(key, value);
    else if (key == "leaky_slope") cfg.leaky_slope = parse_double_value(key, value);
    else if (key == "n_way") cfg.n_way = parse_int_value<int>(key, value);
    else if (key == "k_shot") cfg.k_shot = parse_int_value<int>(key, value);
    else if (key == "query_count") cfg.query_count = parse_int_value<int>(key, value);
    else if (key == "hidden_states") cfg.hidden_states = parse_int_value<int>(key, value);
    else if (key == "rho") cfg.rho = parse_double_value(key, value);
    else if (key == "labeled_fraction") cfg.labeled_fraction = parse_double_value(key, value);
    else if (key == "semi_mode") {
      if (value == "semi") cfg.semi_mode = train::SemiMode::semi;
      else if (value == "labeled_only") cfg.semi_mode = train::SemiMode::labeled_only;
      else throw Error::config("config key 'semi_mode': expected semi|labeled_only");
    }
    else if (key == "iterations") cfg.iterations = parse_int_value<int>(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_int_value<int>(key, value);
    else if (key == "learning_rate") cfg.learning_rate = parse_double_value(key, value);
    else if (key == "weight_decay") cfg.weight_decay = parse_double_value(key, value);
    else if (key == "gamma") cfg.gamma = parse_double_value(key, value);
    else if (key == "train_samples") cfg.train_samples = parse_int_value<int>(key, value);
    else if (key == "eval_samples") cfg.eval_samples = parse_int_value<int>(key, value);
    else if (key == "no_history") cfg.no_history = parse_bool_value(key, value);
    else if (key == "no_bayes") cfg.no_bayes = parse_bool_value(key, value);
    else if (key == "val_every") cfg.val_every = parse_int_value<int>(key, value);
    else if (key == "val_episodes") cfg.val_episodes = parse_int_value<int>(key, value);
    else if (key == "seed") cfg.seed = parse_int_value<std::uint64_t>(key, value);
    else if (key == "data") paths.data = value;
    else if (key == "val_data") paths.val_data = value;
    else if (key == "out") paths.out = value;
    else throw Error::config("unknown config key '" + key + "'");
  }
}

std::string config_echo(const train::TrainConfig& cfg, const RunPaths& paths) {
  std::string s;
  s += "# effective configuration\n";
  s += "data=" + paths.data + "\n";
  s += "val_data=" + paths.val_data + "\n";
  s += "out=" + paths.out + "\n";
  s += "dim=" + std::to_string(cfg.dim) + "\n";
  s += "layers=" + std::to_string(cfg.layers) + "\n";
  s += "dropout=" + format_double(cfg.dropout) + "\n";
  s += "leaky_slope=" + format_double(cfg.leaky_slope) + "\n";
  s += "n_way=" + std::to_string(cfg.n_way) + "\n";
  s += "k_shot=" + std::to_string(cfg.k_shot) + "\n";
  s += "query_count=" + std::to_string(cfg.query_count) + "\n";
  s += "hidden_states=" + std::to_string(cfg.hidden_states) + "\n";
  s += "rho=" + format_double(cfg.rho) + "\n";
  s += "labeled_fraction=" + format_double(cfg.labeled_fraction) + "\n";
  s += std::string("semi_mode=") +
       (cfg.semi_mode == train::SemiMode::semi ? "semi" : "labeled_only") + "\n";
  s += "iterations=" + std::to_string(cfg.iterations) + "\n";
  s += "batch_size=" + std::to_string(cfg.batch_size) + "\n";
  s += "learning_rate=" + format_double(cfg.learning_rate) + "\n";
  s += "weight_decay=" + format_double(cfg.weight_decay) + "\n";
  s += "gamma=" + format_double(cfg.gamma) + "\n";
  s += "train_samples=" + std::to_string(cfg.train_samples) + "\n";
  s += "eval_samples=" + std::to_string(cfg.eval_samples) + "\n";
  s += std::string("no_history=") + (cfg.no_history ? "true" : "false") + "\n";
  s += std::string("no_bayes=") + (cfg.no_bayes ? "true" : "false") + "\n";
  s += "val_every=" + std::to_string(cfg.val_every) + "\n";
  s += "val_episodes=" + std::to_string(cfg.val_episodes) + "\n";
  s += "seed=" + std::to_string(cfg.seed) + "\n";
  return s;
}

void export_plot(const std::string& metrics_path, const std::string& out_path) {
  std::ifstream in(metrics_path);
  if (!in) throw Error::io("cannot open metrics file '" + metrics_path + "'");
  std::string csv = "iter,split,metric,value\n";
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw Error::parse("metrics line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("iter") || !j.contains("split") ||
        !j["iter"].is_number() || !j["split"].is_string()) {
      throw Error::parse("metrics line " + std::to_string(line_no) +
                         ": record needs numeric 'iter' and string 'split'");
    }
    const auto iter = j["iter"].get<std::int64_t>();
    const auto split = j["split"].get<std::string>();
    for (const auto& [key, value] : j.items()) {
      if (key == "iter" || key == "split" || !value.is_number()) continue;
      csv += std::to_string(iter) + "," + split + "," + key + ",";
      if (value.is_number_integer()) {
        csv += std::to_string(value.get<std::int64_t>());
      } else {
        csv += format_double(value.get<double>());
      }
      csv.push_back('\n');
    }
  }
  write_text_file(out_path, csv);
}

namespace {

// Pre-scan for --config so file values load before flag overrides.
std::string find_config_arg(int argc, const char* const* argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return {};
}

std::uint64_t env_seed_or(std::uint64_t fallback) {
  const char* env = std::getenv("BGNN_SEED");
  if (!env) return fallback;
  const std::string s = env;
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error::config("BGNN_SEED: invalid integer '" + s + "'");
  }
  return v;
}

struct TrainFlags {
  train::TrainConfig cfg;
  RunPaths paths;
  std::string config_path;
  bool seed_configured = false;  // seed came from the config file
};

void add_shared_options(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--config", f.config_path, "key=value config file (flags override)");
  cmd->add_option("--dim", f.cfg.dim, "embedding / hidden width");
  cmd->add_option("--layers", f.cfg.layers, "stacked aggregation blocks");
  cmd->add_option("--dropout", f.cfg.dropout, "dropout rate in [0,1)");
  cmd->add_option("--leaky-slope", f.cfg.leaky_slope, "negative slope of leaky relu");
  cmd->add_option("--n-way", f.cfg.n_way, "classes per episode");
  cmd->add_option("--k-shot", f.cfg.k_shot, "support shots per class");
  cmd->add_option("--queries", f.cfg.query_count, "query items per episode");
  cmd->add_option("--hidden-states", f.cfg.hidden_states, "episodes chained per sequence");
  cmd->add_option("--rho", f.cfg.rho, "class-set reuse probability along a sequence");
  cmd->add_option("--labeled-fraction", f.cfg.labeled_fraction,
                  "labeled share of support per class (i/K)");
  cmd->add_option("--semi-mode", [&f](const std::vector<std::string>& vals) {
        if (vals.back() == "semi") f.cfg.semi_mode = train::SemiMode::semi;
        else if (vals.back() == "labeled_only") f.cfg.semi_mode = train::SemiMode::labeled_only;
        else return false;
        return true;
      }, "unlabeled support handling: semi|labeled_only");
  cmd->add_option("--eval-samples", f.cfg.eval_samples, "posterior draws at evaluation");
  cmd->add_flag("--no-history", f.cfg.no_history, "ablation: identity history transition");
  cmd->add_flag("--no-bayes", f.cfg.no_bayes, "ablation: fixed psi=(1,0), no Bayes loss");
  cmd->add_option("--seed", f.cfg.seed, "master seed (BGNN_SEED as fallback)");
}

int cmd_train(CLI::App* cmd, TrainFlags& f, bool seed_flag_given) {
  if (!seed_flag_given && !f.seed_configured) f.cfg.seed = env_seed_or(f.cfg.seed);
  if (f.paths.data.empty()) {
    std::cerr << "train: missing --data (or data= in the config file)\n" << cmd->help();
    return 1;
  }
  const auto train_ds = data::load_dataset(f.paths.data);
  std::optional<data::Dataset> val_ds;
  if (!f.paths.val_data.empty()) val_ds = data::load_dataset(f.paths.val_data);

  std::filesystem::create_directories(f.paths.out);
  write_text_file(f.paths.out + "/config.txt", config_echo(f.cfg, f.paths));

  std::ofstream metrics(f.paths.out + "/metrics.jsonl");
  if (!metrics) throw Error::io("cannot open metrics file in '" + f.paths.out + "'");
  auto sink = [&metrics](const std::string& line) { metrics << line << '\n'; };

  const auto result = train::meta_train(f.cfg, train_ds, val_ds ? &*val_ds : nullptr, sink);
  metrics.close();

  model::save_checkpoint(result.model_cfg, result.final_params,
                         f.paths.out + "/checkpoint_last.json");
  model::save_checkpoint(result.model_cfg, result.best_params,
                         f.paths.out + "/checkpoint_best.json");
  std::cout << "trained " << f.cfg.iterations << " iterations; best val acc "
            << (result.best_val_accuracy < 0 ? 0.0 : result.best_val_accuracy) << "; outputs in "
            << f.paths.out << "\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  try {
    CLI::App app{"continual Bayesian graph network for few-shot classification"};
    app.require_subcommand(1);

    // gen-data
    int gd_classes = 0, gd_dim = 0, gd_per_class = 0;
    double gd_spread = 0.0;
    std::uint64_t gd_seed = 0;
    std::string gd_out, gd_name = "synthetic";
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic feature dataset (CSV)");
    gen->add_option("--classes", gd_classes, "number of classes")->required();
    gen->add_option("--dim", gd_dim, "feature dimension")->required();
    gen->add_option("--spread", gd_spread, "within-class standard deviation")->required();
    gen->add_option("--per-class", gd_per_class, "items per class")->required();
    gen->add_option("--seed", gd_seed, "generator seed (BGNN_SEED as fallback)");
    gen->add_option("--out", gd_out, "output CSV path")->required();
    gen->add_option("--name", gd_name, "dataset name");

    // train
    TrainFlags tf;
    auto* tr = app.add_subcommand("train", "meta-train on a dataset");
    add_shared_options(tr, tf);
    tr->add_option("--data", tf.paths.data, "training dataset CSV");
    tr->add_option("--val-data", tf.paths.val_data, "validation dataset CSV");
    tr->add_option("--out", tf.paths.out, "output directory");
    tr->add_option("--iterations", tf.cfg.iterations, "training iterations");
    tr->add_option("--batch", tf.cfg.batch_size, "sequences per iteration");
    tr->add_option("--lr", tf.cfg.learning_rate, "learning rate");
    tr->add_option("--weight-decay", tf.cfg.weight_decay, "decoupled weight decay");
    tr->add_option("--gamma", tf.cfg.gamma, "Bayes loss coefficient");
    tr->add_option("--train-samples", tf.cfg.train_samples, "posterior draws while training");
    tr->add_option("--val-every", tf.cfg.val_every, "validation cadence (iterations)");
    tr->add_option("--val-episodes", tf.cfg.val_episodes, "sequences per validation pass");

    // eval
    TrainFlags ef;
    std::string ev_checkpoint, ev_out, ev_dump;
    int ev_episodes = 1000;
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    add_shared_options(ev, ef);
    ev->add_option("--checkpoint", ev_checkpoint, "checkpoint JSON")->required();
    ev->add_option("--data", ef.paths.data, "evaluation dataset CSV")->required();
    ev->add_option("--episodes", ev_episodes, "sequences to evaluate");
    ev->add_option("--out", ev_out, "write the report JSON here too");
    ev->add_option("--dump-adjacency", ev_dump,
                   "directory for per-layer adjacency CSVs of one episode");

    // gradcheck
    int gc_dim = 8, gc_layers = 2, gc_hidden = 2;
    double gc_eps = 1e-5, gc_tol = 1e-4;
    std::uint64_t gc_seed = 1;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full model");
    gc->add_option("--dim", gc_dim, "embedding width");
    gc->add_option("--layers", gc_layers, "aggregation blocks");
    gc->add_option("--hidden-states", gc_hidden, "episodes per sequence");
    gc->add_option("--eps", gc_eps, "finite-difference step");
    gc->add_option("--tol", gc_tol, "max relative error to pass");
    gc->add_option("--seed", gc_seed, "seed");

    // export-plot
    std::string xp_metrics, xp_out;
    auto* xp = app.add_subcommand("export-plot", "metrics JSONL -> tidy CSV");
    xp->add_option("--metrics", xp_metrics, "metrics.jsonl path")->required();
    xp->add_option("--out", xp_out, "output CSV path")->required();

    // Config file values load first so command-line flags override them.
    const std::string config_path = find_config_arg(argc, argv);
    if (!config_path.empty()) {
      const auto kv = read_config_file(config_path);
      for (auto* flags : {&tf, &ef}) {
        apply_config(kv, flags->cfg, flags->paths);
        flags->seed_configured = kv.count("seed") > 0;
      }
    }

    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      std::cerr << e.what() << "\n\n" << app.help();
      return 1;
    }

    if (app.got_subcommand(gen)) {
      if (gen->count("--seed") == 0) gd_seed = env_seed_or(gd_seed);
      RngStream rng(gd_seed);
      const auto ds = data::make_synthetic_dataset(gd_classes, gd_dim, gd_spread, gd_per_class,
                                                   rng, gd_name);
      data::save_dataset_csv(ds, gd_out);
      std::cout << "wrote " << ds.num_items() << " items (" << gd_classes << " classes, dim "
                << gd_dim << ") to " << gd_out << "\n";
      return 0;
    }

    if (app.got_subcommand(tr)) {
      return cmd_train(tr, tf, tr->count("--seed") > 0);
    }

    if (app.got_subcommand(ev)) {
      if (ev->count("--seed") == 0 && !ef.seed_configured) ef.cfg.seed = env_seed_or(ef.cfg.seed);
      auto [mcfg, params] = model::load_checkpoint(ev_checkpoint);
      ef.cfg.dim = mcfg.dim;
      ef.cfg.layers = mcfg.layers;
      ef.cfg.dropout = mcfg.dropout;
      ef.cfg.leaky_slope = mcfg.leaky_slope;
      ef.cfg.validate();
      const auto ds = data::load_dataset(ef.paths.data);
      if (ds.dim() != mcfg.input_dim) {
        throw Error::structure("eval: dataset dim " + std::to_string(ds.dim()) +
                               " does not match checkpoint input_dim " +
                               std::to_string(mcfg.input_dim));
      }
      model::Network net(mcfg, std::move(params));
      const auto report =
          train::evaluate(net, ds, ev_episodes, ef.cfg, RngStream(ef.cfg.seed));
      nlohmann::ordered_json j;
      j["accuracy"] = report.accuracy;
      j["ci"] = report.ci_half_width;
      j["episodes"] = report.episode_count;
      j["acc_by_pos"] = report.acc_by_position;
      const std::string line = j.dump();
      std::cout << line << "\n";
      if (!ev_out.empty()) write_text_file(ev_out, line + "\n");
      if (!ev_dump.empty()) {
        std::filesystem::create_directories(ev_dump);
        RngStream dump_rng(ef.cfg.seed);
        RngStream sample_rng = dump_rng.substream(0);
        RngStream fwd_rng = dump_rng.substream(1);
        const auto seq = train::sample_task_sequence(ds, ef.cfg, sample_rng);
        Tape tape;
        const auto fwd = net.forward_sequence(
            tape, seq,
            model::HistoryState::zeros(mcfg.layers, seq.episodes.front().num_nodes(), mcfg.dim),
            fwd_rng, ef.cfg.forward_options(false));
        const auto& last = fwd.episodes.back();
        write_matrix_csv(ev_dump + "/a0.csv", last.graph.a0);
        write_matrix_csv(ev_dump + "/a0_normalized.csv", last.a0_normalized);
        for (std::size_t k = 0; k < last.layer_adjacency.size(); ++k) {
          write_matrix_csv(ev_dump + "/a_layer" + std::to_string(k + 1) + ".csv",
                           last.layer_adjacency[k]);
        }
      }
      return 0;
    }

    if (app.got_subcommand(gc)) {
      if (gc->count("--seed") == 0) gc_seed = env_seed_or(gc_seed);
      train::TrainConfig cfg;
      cfg.dim = gc_dim;
      cfg.layers = gc_layers;
      cfg.hidden_states = gc_hidden;
      cfg.n_way = 2;
      cfg.k_shot = 1;
      cfg.query_count = 2;
      cfg.dropout = 0.0;
      cfg.batch_size = 1;
      cfg.train_samples = 1;
      cfg.seed = gc_seed;
      const auto report = train::full_model_grad_check(cfg, gc_dim, gc_eps, gc_tol);
      std::cout << report.summary() << "\n";
      return report.pass ? 0 : 2;
    }

    if (app.got_subcommand(xp)) {
      export_plot(xp_metrics, xp_out);
      std::cout << "wrote " << xp_out << "\n";
      return 0;
    }

    std::cerr << app.help();
    return 1;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::usage) {
      std::cerr << e.what() << "\n";
      return 1;
    }
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace bgnn::cli
