#include "bgnn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include <json.hpp>

#include "bgnn/error.hpp"
#include "bgnn/losses.hpp"
#include "bgnn/ops.hpp"
#include "bgnn/optimizer.hpp"

namespace bgnn::train {
namespace {

// Top-level substream layout under the master seed.
constexpr std::uint64_t kStreamInit = 0;
constexpr std::uint64_t kStreamIter = 1;  // .substream(iter).substream(batch).substream(purpose)
constexpr std::uint64_t kStreamVal = 2;   // .substream(iter)
constexpr std::uint64_t kPurposeSample = 0;
constexpr std::uint64_t kPurposeForward = 1;

double episode_accuracy(const Tensor& prediction, const data::Episode& ep) {
  const auto pred = model::predict_labels(prediction, ep);
  if (pred.empty()) return 0.0;
  int correct = 0;
  for (std::size_t q = 0; q < pred.size(); ++q) {
    if (pred[q] == ep.query[q].slot) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

}  // namespace

SequenceLossParts sequence_loss(Tape& tape, const model::ForwardResult& fwd,
                                const TrainConfig& cfg) {
  Tensor le_total, lb_total;
  for (const auto& epo : fwd.episodes) {
    const auto& g = epo.graph;
    Tensor le = edge_loss(tape, epo.layer_predictions, g.edge_targets, g.valid_mask);
    le_total = le_total.defined() ? add(tape, le_total, le) : le;
    if (!cfg.no_bayes) {
      std::vector<Tensor> logliks;
      const auto n_samples = epo.sample_predictions.front().size();
      logliks.reserve(n_samples);
      for (std::size_t s = 0; s < n_samples; ++s) {
        std::vector<Tensor> ps;
        ps.reserve(epo.sample_predictions.size());
        for (const auto& layer : epo.sample_predictions) ps.push_back(layer[s]);
        logliks.push_back(
            mul_scalar(tape, edge_loss(tape, ps, g.edge_targets, g.valid_mask), -1.0));
      }
      Tensor lb = bayes_loss(tape, epo.posterior, logliks);
      lb_total = lb_total.defined() ? add(tape, lb_total, lb) : lb;
    }
  }
  const double inv_t = 1.0 / static_cast<double>(fwd.episodes.size());
  SequenceLossParts out;
  Tensor le_seq = mul_scalar(tape, le_total, inv_t);
  out.loss_e = le_seq.value();
  out.total = le_seq;
  if (!cfg.no_bayes) {
    Tensor lb_seq = mul_scalar(tape, lb_total, inv_t);
    out.loss_b = lb_seq.value();
    out.total = add(tape, out.total, mul_scalar(tape, lb_seq, cfg.gamma));
  }
  return out;
}

GradCheckReport full_model_grad_check(const TrainConfig& cfg, int feature_dim, double eps,
                                      double tol) {
  cfg.validate();
  RngStream ds_rng = RngStream(cfg.seed).substream(100);
  const int per_class = cfg.k_shot + cfg.query_count + 2;
  auto ds = data::make_synthetic_dataset(std::max(cfg.n_way + 1, 4), feature_dim, 0.5, per_class,
                                         ds_rng, "gradcheck");
  RngStream seq_rng = RngStream(cfg.seed).substream(101);
  const auto seq = sample_task_sequence(ds, cfg, seq_rng);
  RngStream init_rng = RngStream(cfg.seed).substream(102);
  const auto mcfg = cfg.model_config(feature_dim);
  auto params = model::ModelParams::init(mcfg, init_rng);
  model::Network net(mcfg, params);
  const int v = seq.episodes.front().num_nodes();
  const auto opt = cfg.forward_options(true);
  auto f = [&](Tape& tape) {
    // Rebuilt per call so dropout masks and posterior draws replay exactly.
    RngStream fwd_rng = RngStream(cfg.seed).substream(103);
    const auto fwd = net.forward_sequence(
        tape, seq, model::HistoryState::zeros(mcfg.layers, v, mcfg.dim), fwd_rng, opt);
    return sequence_loss(tape, fwd, cfg).total;
  };
  const auto all = params.all();
  return grad_check(f, all, eps, tol);
}

void TrainConfig::validate() const {
  model_config(1).validate();
  if (n_way < 2) throw Error::config("train: n_way must be >= 2");
  if (k_shot < 1) throw Error::config("train: k_shot must be >= 1");
  if (query_count < 1) throw Error::config("train: query_count must be >= 1");
  if (hidden_states < 1) throw Error::config("train: hidden_states must be >= 1");
  if (rho < 0.0 || rho > 1.0) throw Error::config("train: rho must lie in [0, 1]");
  if (labeled_fraction <= 0.0 || labeled_fraction > 1.0) {
    throw Error::config("train: labeled_fraction must lie in (0, 1]");
  }
  if (iterations < 0) throw Error::config("train: iterations must be >= 0");
  if (batch_size < 1) throw Error::config("train: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw Error::config("train: learning_rate must be positive");
  if (weight_decay < 0.0) throw Error::config("train: weight_decay must be >= 0");
  if (gamma < 0.0) throw Error::config("train: gamma must be >= 0");
  if (train_samples < 1) throw Error::config("train: train_samples must be >= 1");
  if (eval_samples < 1) throw Error::config("train: eval_samples must be >= 1");
  if (val_every < 1) throw Error::config("train: val_every must be >= 1");
  if (val_episodes < 2) throw Error::config("train: val_episodes must be >= 2");
}

model::ModelConfig TrainConfig::model_config(int input_dim) const {
  model::ModelConfig m;
  m.input_dim = input_dim;
  m.dim = dim;
  m.layers = layers;
  m.dropout = dropout;
  m.leaky_slope = leaky_slope;
  return m;
}

model::ForwardOptions TrainConfig::forward_options(bool train) const {
  model::ForwardOptions opt;
  opt.no_history = no_history;
  opt.no_bayes = no_bayes;
  opt.n_samples = train ? train_samples : eval_samples;
  opt.train = train;
  return opt;
}

EvalReport EvalReport::from_accuracies(std::vector<double> accs) {
  if (accs.size() < 2) throw Error::config("eval report: need at least 2 episodes");
  EvalReport r;
  r.episode_count = static_cast<std::int64_t>(accs.size());
  double mean = 0.0;
  for (double a : accs) mean += a;
  mean /= static_cast<double>(accs.size());
  double var = 0.0;
  for (double a : accs) var += (a - mean) * (a - mean);
  var /= static_cast<double>(accs.size() - 1);
  r.accuracy = mean;
  r.ci_half_width = 1.96 * std::sqrt(var) / std::sqrt(static_cast<double>(accs.size()));
  r.per_episode = std::move(accs);
  return r;
}

data::EpisodeSequence sample_task_sequence(const data::Dataset& ds, const TrainConfig& cfg,
                                           RngStream& rng) {
  auto seq = data::build_sequence(ds, cfg.hidden_states, cfg.n_way, cfg.k_shot, cfg.query_count,
                                  cfg.rho, rng);
  if (cfg.labeled_fraction < 1.0) {
    for (auto& ep : seq.episodes) {
      ep = data::apply_label_budget(ep, cfg.labeled_fraction, rng);
      if (cfg.semi_mode == SemiMode::labeled_only) ep = data::drop_unlabeled(ep);
    }
  }
  return seq;
}

EvalReport evaluate(const model::Network& net, const data::Dataset& ds, int num_sequences,
                    const TrainConfig& cfg, RngStream rng) {
  if (num_sequences < 2) throw Error::config("evaluate: num_sequences must be >= 2");
  const auto opt = cfg.forward_options(false);
  std::vector<double> finals;
  finals.reserve(static_cast<std::size_t>(num_sequences));
  std::vector<double> position_sum(static_cast<std::size_t>(cfg.hidden_states), 0.0);
  for (int n = 0; n < num_sequences; ++n) {
    RngStream srng = rng.substream(static_cast<std::uint64_t>(n));
    RngStream sample_rng = srng.substream(kPurposeSample);
    RngStream fwd_rng = srng.substream(kPurposeForward);
    const auto seq = sample_task_sequence(ds, cfg, sample_rng);
    const int v = seq.episodes.front().num_nodes();
    Tape tape;
    const auto fwd = net.forward_sequence(
        tape, seq, model::HistoryState::zeros(net.config().layers, v, net.config().dim), fwd_rng,
        opt);
    for (std::size_t t = 0; t < fwd.episodes.size(); ++t) {
      const double acc =
          episode_accuracy(fwd.episodes[t].layer_predictions.back(), seq.episodes[t]);
      position_sum[t] += acc;
      if (t + 1 == fwd.episodes.size()) finals.push_back(acc);
    }
  }
  EvalReport report = EvalReport::from_accuracies(std::move(finals));
  report.acc_by_position.reserve(position_sum.size());
  for (double s : position_sum) {
    report.acc_by_position.push_back(s / static_cast<double>(num_sequences));
  }
  return report;
}

TrainResult meta_train(const TrainConfig& cfg, const data::Dataset& train_ds,
                       const data::Dataset* val_ds, const LogSink& sink) {
  cfg.validate();
  const data::Dataset& vds = val_ds ? *val_ds : train_ds;
  if (val_ds && val_ds->dim() != train_ds.dim()) {
    throw Error::structure("meta_train: train and validation feature dims differ");
  }

  RngStream master(cfg.seed);
  RngStream init_rng = master.substream(kStreamInit);
  const auto mcfg = cfg.model_config(train_ds.dim());
  auto params = model::ModelParams::init(mcfg, init_rng);
  model::Network net(mcfg, params);
  Adam opt(params.all());
  const auto fwd_opt = cfg.forward_options(true);

  TrainResult result;
  result.model_cfg = mcfg;
  auto log = [&](const nlohmann::ordered_json& j) {
    std::string line = j.dump();
    if (sink) sink(line);
    result.log_lines.push_back(std::move(line));
  };

  bool have_best = false;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    RngStream iter_rng = master.substream(kStreamIter).substream(static_cast<std::uint64_t>(iter));
    opt.zero_grad();
    double sum_e = 0.0, sum_b = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      RngStream brng = iter_rng.substream(static_cast<std::uint64_t>(b));
      RngStream sample_rng = brng.substream(kPurposeSample);
      RngStream forward_rng = brng.substream(kPurposeForward);
      const auto seq = sample_task_sequence(train_ds, cfg, sample_rng);
      const int v = seq.episodes.front().num_nodes();
      Tape tape;
      const auto fwd = net.forward_sequence(
          tape, seq, model::HistoryState::zeros(mcfg.layers, v, mcfg.dim), forward_rng, fwd_opt);
      auto loss = sequence_loss(tape, fwd, cfg);
      if (!std::isfinite(loss.total.value())) {
        throw Error::numeric("meta_train: non-finite loss at iteration " + std::to_string(iter));
      }
      sum_e += loss.loss_e;
      sum_b += loss.loss_b;
      Tensor scaled = mul_scalar(tape, loss.total, 1.0 / static_cast<double>(cfg.batch_size));
      tape.backward(scaled);
    }
    opt.step(cfg.learning_rate, cfg.weight_decay);

    nlohmann::ordered_json rec;
    rec["iter"] = iter + 1;
    rec["split"] = "train";
    rec["loss_E"] = sum_e / cfg.batch_size;
    if (!cfg.no_bayes) rec["loss_B"] = sum_b / cfg.batch_size;
    log(rec);

    if ((iter + 1) % cfg.val_every == 0 || iter + 1 == cfg.iterations) {
      const auto report =
          evaluate(net, vds, cfg.val_episodes, cfg,
                   master.substream(kStreamVal).substream(static_cast<std::uint64_t>(iter + 1)));
      nlohmann::ordered_json vrec;
      vrec["iter"] = iter + 1;
      vrec["split"] = "val";
      vrec["acc"] = report.accuracy;
      vrec["ci"] = report.ci_half_width;
      vrec["acc_by_pos"] = report.acc_by_position;
      log(vrec);
      if (report.accuracy > result.best_val_accuracy) {
        result.best_val_accuracy = report.accuracy;
        result.best_params = params.clone();
        have_best = true;
      }
    }
  }

  result.final_params = params;
  if (!have_best) result.best_params = params.clone();
  return result;
}

}  // namespace bgnn::train
