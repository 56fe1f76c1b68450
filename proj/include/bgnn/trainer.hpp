#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bgnn/dataset.hpp"
#include "bgnn/episode.hpp"
#include "bgnn/gradcheck.hpp"
#include "bgnn/model.hpp"

namespace bgnn::train {

// Handling of unlabeled support items in label-scarce episodes: keep them in
// the graph as unsupervised nodes, or drop them entirely.
enum class SemiMode { semi, labeled_only };

struct TrainConfig {
  // model
  int dim = 96;
  int layers = 3;
  double dropout = 0.3;
  double leaky_slope = 0.01;
  // episodes
  int n_way = 5;
  int k_shot = 1;
  int query_count = 5;
  int hidden_states = 8;  // episodes chained per sequence (T)
  double rho = 0.0;       // probability a sequence step reuses the class set
  double labeled_fraction = 1.0;
  SemiMode semi_mode = SemiMode::semi;
  // optimization
  int iterations = 2000;
  int batch_size = 4;
  double learning_rate = 1e-3;
  double weight_decay = 1e-6;
  double gamma = 1.0;  // weight of the Bayes loss
  // posterior sampling
  int train_samples = 1;
  int eval_samples = 8;
  // ablations
  bool no_history = false;
  bool no_bayes = false;
  // evaluation and logging
  int val_every = 200;
  int val_episodes = 200;
  std::uint64_t seed = 0;

  void validate() const;
  model::ModelConfig model_config(int input_dim) const;
  model::ForwardOptions forward_options(bool train) const;
};

struct EvalReport {
  double accuracy = 0.0;
  double ci_half_width = 0.0;  // 1.96 * sample std / sqrt(n)
  std::vector<double> per_episode;
  std::int64_t episode_count = 0;
  std::vector<double> acc_by_position;  // mean accuracy per sequence position

  static EvalReport from_accuracies(std::vector<double> accs);
};

struct TrainResult {
  model::ModelConfig model_cfg;
  model::ModelParams final_params;
  model::ModelParams best_params;  // best validation accuracy, final if never validated
  double best_val_accuracy = -1.0;
  std::vector<std::string> log_lines;  // JSON-lines metrics records
};

using LogSink = std::function<void(const std::string&)>;

// One task sequence under the configured correlation, label budget and semi
// strategy.
data::EpisodeSequence sample_task_sequence(const data::Dataset& ds, const TrainConfig& cfg,
                                           RngStream& rng);

struct SequenceLossParts {
  Tensor total;  // L_E + gamma * L_B
  double loss_e = 0.0;
  double loss_b = 0.0;
};

// Training objective of one forward sequence: mean edge loss over episodes
// plus gamma times the mean Bayes loss (omitted entirely under no_bayes).
SequenceLossParts sequence_loss(Tape& tape, const model::ForwardResult& fwd,
                                const TrainConfig& cfg);

// Gradient check of every model parameter through the full sequence loss on
// one fixed synthetic task sequence. Deterministic given cfg.seed; pass
// cfg.dropout = 0 to keep the objective smooth.
GradCheckReport full_model_grad_check(const TrainConfig& cfg, int feature_dim, double eps,
                                      double tol);

// The meta-training loop: per iteration, sample batch_size sequences, run the
// forward over each, minimize mean(L_E) + gamma * mean(L_B) with Adam.
// Deterministic given (cfg, datasets): identical runs produce bit-identical
// logs and parameters. Aborts with a numeric error naming the iteration if a
// loss goes non-finite.
TrainResult meta_train(const TrainConfig& cfg, const data::Dataset& train_ds,
                       const data::Dataset* val_ds = nullptr, const LogSink& sink = {});

// Samples num_sequences task sequences from ds, runs the model with warm
// history and scores query labels of each final episode from the last layer.
// num_sequences must be >= 2.
EvalReport evaluate(const model::Network& net, const data::Dataset& ds, int num_sequences,
                    const TrainConfig& cfg, RngStream rng);

}  // namespace bgnn::train
