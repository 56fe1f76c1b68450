#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bgnn/episode.hpp"
#include "bgnn/graph.hpp"
#include "bgnn/ops.hpp"
#include "bgnn/rng.hpp"
#include "bgnn/tensor.hpp"

namespace bgnn::model {

struct ModelConfig {
  int input_dim = 16;      // feature dimension of episode items
  int dim = 96;            // node embedding / hidden-state width
  int layers = 3;          // stacked aggregation blocks
  double dropout = 0.3;
  double leaky_slope = 0.01;
  double sigma2_floor = 1e-6;

  void validate() const;
};

struct LinearParams {
  Tensor w;
  Tensor b;
};

// Node transform f_n: linear(2*in -> dim), leaky relu, linear(dim -> dim),
// dropout.
struct NodeBlockParams {
  LinearParams l1;
  LinearParams l2;
};

// Gated history transition weights.
struct GruParams {
  Tensor wz, uz, bz;
  Tensor wr, ur, br;
  Tensor wh, uh, bh;
};

// Edge metric f_e over |h_i - h_j|: four linear blocks dim->dim->dim->dim->1
// with layer normalization after the first, a leaky relu and dropout per
// hidden block, sigmoid at the end.
struct EdgeBlockParams {
  LinearParams l1;
  Tensor ln_gain, ln_bias;
  LinearParams l2;
  LinearParams l3;
  LinearParams l4;
};

struct LayerParams {
  NodeBlockParams node;
  GruParams gru;
  EdgeBlockParams edge;
};

// Every trainable tensor of the model. all()/names() enumerate in a fixed
// order shared by the optimizer, checkpoints and gradient checks.
struct ModelParams {
  std::vector<LayerParams> layers;
  LinearParams mu_head;     // pooled hidden -> (mean of W_t, mean of b_t)
  LinearParams delta_head;  // pooled hidden -> raw variances, softplus+floor

  static ModelParams init(const ModelConfig& cfg, RngStream& rng);

  std::vector<Tensor> all() const;
  std::vector<std::string> names() const;
  ModelParams clone() const;
  void zero_grad() const;
  std::int64_t count() const;
};

// Amortized Gaussian over the per-task classifier psi = (W_t, b_t); both
// tensors have shape [2] and sigma2 is strictly positive.
struct PosteriorParams {
  Tensor mu;
  Tensor sigma2;
  bool defined() const { return mu.defined(); }
};

// Per-layer hidden vectors carried across the episodes of one sequence,
// indexed by node slot. step counts episodes consumed so far and addresses
// the per-episode rng substream.
struct HistoryState {
  std::vector<Tensor> h;  // per layer: [V_slots, dim]
  int step = 0;

  static HistoryState zeros(int layers, int v_slots, int dim);
};

struct ForwardOptions {
  bool no_history = false;  // replace the gated transition by identity
  bool no_bayes = false;    // fixed psi = (1, 0), no posterior
  int n_samples = 1;        // posterior draws averaged per prediction
  bool train = false;       // enables dropout
};

struct EpisodeOutput {
  std::vector<Tensor> layer_predictions;               // [V,V] per layer, sample mean
  std::vector<std::vector<Tensor>> sample_predictions; // [layer][sample]
  PosteriorParams posterior;                           // undefined when no_bayes
  graph::EpisodeGraph graph;
  // retained intermediates, one per layer
  Tensor a0_normalized;
  std::vector<Tensor> layer_nodes;      // node_update outputs
  std::vector<Tensor> layer_hidden;     // post-transition hidden states
  std::vector<Tensor> layer_adjacency;  // normalized edge_update outputs
};

struct ForwardResult {
  std::vector<EpisodeOutput> episodes;
  HistoryState final_state;  // detached
};

// Substream tags consumed by forward_sequence: for the episode with global
// index s (h0.step + position) it draws from rng.substream(s).substream(tag).
inline constexpr std::uint64_t kRngDropout = 0;
inline constexpr std::uint64_t kRngPosterior = 1;

class Network {
 public:
  Network(ModelConfig cfg, ModelParams params);

  const ModelConfig& config() const { return cfg_; }
  const ModelParams& params() const { return params_; }

  // One aggregation block: v_hat = A v, then f_n([v ; v_hat]).
  Tensor node_update(Tape& tape, const Tensor& v, const Tensor& a, int layer, bool train,
                     RngStream& rng) const;

  // Gated history transition, the literal four-equation update with the
  // candidate weighted by z and the previous state by (1 - z).
  Tensor history_transition(Tape& tape, const Tensor& v, const Tensor& h_prev, int layer) const;

  // f_e over pairwise |h_i - h_j|, symmetrized and degree-normalized.
  graph::NormalizedAdjacency edge_update(Tape& tape, const Tensor& h, int layer, bool train,
                                         RngStream& rng) const;

  PosteriorParams amortize_posterior(Tape& tape, const Tensor& h_final) const;

  // mq * sigmoid(w A + b) * ms for scalar tensors w, b.
  static Tensor masked_prediction(Tape& tape, const Tensor& a, const Tensor& w, const Tensor& b,
                                  const Tensor& mq, const Tensor& ms);

  // Mean over n_samples posterior draws of masked_prediction; entries outside
  // the query-row/support-column region are exactly zero.
  Tensor edge_inference(Tape& tape, const Tensor& a, const PosteriorParams& post,
                        const Tensor& mq, const Tensor& ms, RngStream& rng, int n_samples) const;

  ForwardResult forward_sequence(Tape& tape, const data::EpisodeSequence& seq, HistoryState h0,
                                 RngStream& rng, const ForwardOptions& opt) const;

 private:
  ModelConfig cfg_;
  ModelParams params_;
};

// Per-query argmax over classes of the mean edge score against the labeled
// support of each class; ties break toward the lowest slot. Returns one slot
// per query node in episode order.
std::vector<int> predict_labels(const Tensor& p, const data::Episode& ep);

// Metric baseline: class means of labeled support features scored by
// x . mu_c - |mu_c|^2 / 2, argmax with lowest-slot ties.
std::vector<int> prototype_baseline(const data::Episode& ep);

// Checkpoints: JSON with the model config and every named parameter tensor
// (shape + row-major float64 data). Save/load round-trips are bit-exact.
void save_checkpoint(const ModelConfig& cfg, const ModelParams& params, const std::string& path);
std::pair<ModelConfig, ModelParams> load_checkpoint(const std::string& path);

}  // namespace bgnn::model
