#include "bgnn/model.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <utility>

#include <json.hpp>

#include "bgnn/error.hpp"

namespace bgnn::model {
namespace {

Tensor glorot(RngStream& rng, int fan_in, int fan_out) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::vector<double> w(static_cast<std::size_t>(fan_in) * fan_out);
  for (auto& v : w) v = (2.0 * rng.uniform() - 1.0) * limit;
  return Tensor::from_data({fan_in, fan_out}, std::move(w), true);
}

Tensor zeros_param(int n) { return Tensor::zeros({n}, true); }

template <typename Params, typename Fn>
void visit_params(Params& p, Fn&& fn) {
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    auto& l = p.layers[k];
    const std::string base = "layers." + std::to_string(k) + ".";
    fn(base + "node.l1.w", l.node.l1.w);
    fn(base + "node.l1.b", l.node.l1.b);
    fn(base + "node.l2.w", l.node.l2.w);
    fn(base + "node.l2.b", l.node.l2.b);
    fn(base + "gru.wz", l.gru.wz);
    fn(base + "gru.uz", l.gru.uz);
    fn(base + "gru.bz", l.gru.bz);
    fn(base + "gru.wr", l.gru.wr);
    fn(base + "gru.ur", l.gru.ur);
    fn(base + "gru.br", l.gru.br);
    fn(base + "gru.wh", l.gru.wh);
    fn(base + "gru.uh", l.gru.uh);
    fn(base + "gru.bh", l.gru.bh);
    fn(base + "edge.l1.w", l.edge.l1.w);
    fn(base + "edge.l1.b", l.edge.l1.b);
    fn(base + "edge.ln_gain", l.edge.ln_gain);
    fn(base + "edge.ln_bias", l.edge.ln_bias);
    fn(base + "edge.l2.w", l.edge.l2.w);
    fn(base + "edge.l2.b", l.edge.l2.b);
    fn(base + "edge.l3.w", l.edge.l3.w);
    fn(base + "edge.l3.b", l.edge.l3.b);
    fn(base + "edge.l4.w", l.edge.l4.w);
    fn(base + "edge.l4.b", l.edge.l4.b);
  }
  fn("mu_head.w", p.mu_head.w);
  fn("mu_head.b", p.mu_head.b);
  fn("delta_head.w", p.delta_head.w);
  fn("delta_head.b", p.delta_head.b);
}

}  // namespace

void ModelConfig::validate() const {
  if (input_dim < 1) throw Error::config("model: input_dim must be >= 1");
  if (dim < 2) throw Error::config("model: dim must be >= 2");
  if (layers < 1) throw Error::config("model: layers must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw Error::config("model: dropout must lie in [0, 1)");
  if (!(leaky_slope > 0.0)) throw Error::config("model: leaky_slope must be positive");
  if (sigma2_floor < 0.0) throw Error::config("model: sigma2_floor must be >= 0");
}

ModelParams ModelParams::init(const ModelConfig& cfg, RngStream& rng) {
  cfg.validate();
  ModelParams p;
  p.layers.resize(static_cast<std::size_t>(cfg.layers));
  for (int k = 0; k < cfg.layers; ++k) {
    auto& l = p.layers[static_cast<std::size_t>(k)];
    const int in = k == 0 ? cfg.input_dim : cfg.dim;
    l.node.l1 = {glorot(rng, 2 * in, cfg.dim), zeros_param(cfg.dim)};
    l.node.l2 = {glorot(rng, cfg.dim, cfg.dim), zeros_param(cfg.dim)};
    l.gru.wz = glorot(rng, cfg.dim, cfg.dim);
    l.gru.uz = glorot(rng, cfg.dim, cfg.dim);
    l.gru.bz = zeros_param(cfg.dim);
    l.gru.wr = glorot(rng, cfg.dim, cfg.dim);
    l.gru.ur = glorot(rng, cfg.dim, cfg.dim);
    l.gru.br = zeros_param(cfg.dim);
    l.gru.wh = glorot(rng, cfg.dim, cfg.dim);
    l.gru.uh = glorot(rng, cfg.dim, cfg.dim);
    l.gru.bh = zeros_param(cfg.dim);
    l.edge.l1 = {glorot(rng, cfg.dim, cfg.dim), zeros_param(cfg.dim)};
    l.edge.ln_gain = Tensor::full({cfg.dim}, 1.0, true);
    l.edge.ln_bias = zeros_param(cfg.dim);
    l.edge.l2 = {glorot(rng, cfg.dim, cfg.dim), zeros_param(cfg.dim)};
    l.edge.l3 = {glorot(rng, cfg.dim, cfg.dim), zeros_param(cfg.dim)};
    l.edge.l4 = {glorot(rng, cfg.dim, 1), zeros_param(1)};
  }
  p.mu_head = {glorot(rng, cfg.dim, 2), zeros_param(2)};
  // Start the posterior narrow: softplus(-3) ~ 0.05 keeps early psi draws
  // close to their means.
  p.delta_head = {glorot(rng, cfg.dim, 2), Tensor::full({2}, -3.0, true)};
  return p;
}

std::vector<Tensor> ModelParams::all() const {
  std::vector<Tensor> out;
  visit_params(*this, [&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

std::vector<std::string> ModelParams::names() const {
  std::vector<std::string> out;
  visit_params(*this, [&](const std::string& n, const Tensor&) { out.push_back(n); });
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams copy = *this;
  visit_params(copy, [&](const std::string&, Tensor& t) { t = t.clone(true); });
  return copy;
}

void ModelParams::zero_grad() const {
  for (const Tensor& t : all()) const_cast<Tensor&>(t).zero_grad();
}

std::int64_t ModelParams::count() const {
  std::int64_t n = 0;
  for (const Tensor& t : all()) n += t.size();
  return n;
}

HistoryState HistoryState::zeros(int layers, int v_slots, int dim) {
  HistoryState s;
  s.h.reserve(static_cast<std::size_t>(layers));
  for (int k = 0; k < layers; ++k) s.h.push_back(Tensor::zeros({v_slots, dim}));
  return s;
}

Network::Network(ModelConfig cfg, ModelParams params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
  if (static_cast<int>(params_.layers.size()) != cfg_.layers) {
    throw Error::structure("network: parameter layer count does not match config");
  }
}

Tensor Network::node_update(Tape& tape, const Tensor& v, const Tensor& a, int layer, bool train,
                            RngStream& rng) const {
  const auto& p = params_.layers.at(static_cast<std::size_t>(layer)).node;
  Tensor vhat = matmul(tape, a, v);
  Tensor cat = concat_cols(tape, v, vhat);
  Tensor h1 = leaky_relu(tape, linear(tape, cat, p.l1.w, p.l1.b), cfg_.leaky_slope);
  Tensor out = linear(tape, h1, p.l2.w, p.l2.b);
  return dropout(tape, out, cfg_.dropout, train, rng);
}

Tensor Network::history_transition(Tape& tape, const Tensor& v, const Tensor& h_prev,
                                   int layer) const {
  const auto& p = params_.layers.at(static_cast<std::size_t>(layer)).gru;
  Tensor z = sigmoid(tape, add(tape, linear(tape, v, p.wz, p.bz), matmul(tape, h_prev, p.uz)));
  Tensor r = sigmoid(tape, add(tape, linear(tape, v, p.wr, p.br), matmul(tape, h_prev, p.ur)));
  Tensor cand =
      tanh(tape, add(tape, linear(tape, v, p.wh, p.bh), matmul(tape, mul(tape, r, h_prev), p.uh)));
  Tensor keep = add_scalar(tape, mul_scalar(tape, z, -1.0), 1.0);
  return add(tape, mul(tape, cand, z), mul(tape, h_prev, keep));
}

graph::NormalizedAdjacency Network::edge_update(Tape& tape, const Tensor& h, int layer, bool train,
                                                RngStream& rng) const {
  const auto& p = params_.layers.at(static_cast<std::size_t>(layer)).edge;
  const int v = h.rows();
  Tensor x = pairwise_absdiff(tape, h);
  x = linear(tape, x, p.l1.w, p.l1.b);
  x = layer_norm(tape, x, p.ln_gain, p.ln_bias);
  x = leaky_relu(tape, x, cfg_.leaky_slope);
  x = dropout(tape, x, cfg_.dropout, train, rng);
  x = leaky_relu(tape, linear(tape, x, p.l2.w, p.l2.b), cfg_.leaky_slope);
  x = leaky_relu(tape, linear(tape, x, p.l3.w, p.l3.b), cfg_.leaky_slope);
  Tensor scores = sigmoid(tape, linear(tape, x, p.l4.w, p.l4.b));
  Tensor atilde = reshape(tape, scores, {v, v});
  Tensor sym = mul_scalar(tape, add(tape, atilde, transpose(tape, atilde)), 0.5);
  return graph::normalize_adjacency(tape, sym);
}

PosteriorParams Network::amortize_posterior(Tape& tape, const Tensor& h_final) const {
  Tensor pooled = col_mean(tape, h_final);  // permutation-invariant set summary
  Tensor mu = reshape(tape, linear(tape, pooled, params_.mu_head.w, params_.mu_head.b), {2});
  Tensor raw = reshape(tape, linear(tape, pooled, params_.delta_head.w, params_.delta_head.b), {2});
  Tensor sigma2 = add_scalar(tape, softplus(tape, raw), cfg_.sigma2_floor);
  return {mu, sigma2};
}

Tensor Network::masked_prediction(Tape& tape, const Tensor& a, const Tensor& w, const Tensor& b,
                                  const Tensor& mq, const Tensor& ms) {
  Tensor logits = scalar_add(tape, b, scalar_mul(tape, w, a));
  return mul(tape, mul(tape, sigmoid(tape, logits), mq), ms);
}

Tensor Network::edge_inference(Tape& tape, const Tensor& a, const PosteriorParams& post,
                               const Tensor& mq, const Tensor& ms, RngStream& rng,
                               int n_samples) const {
  if (n_samples < 1) throw Error::config("edge_inference: n_samples must be >= 1");
  Tensor acc;
  for (int s = 0; s < n_samples; ++s) {
    Tensor psi = gaussian_sample(tape, post.mu, post.sigma2, rng);
    Tensor p = masked_prediction(tape, a, select(tape, psi, 0), select(tape, psi, 1), mq, ms);
    acc = s == 0 ? p : add(tape, acc, p);
  }
  return n_samples == 1 ? acc : mul_scalar(tape, acc, 1.0 / n_samples);
}

ForwardResult Network::forward_sequence(Tape& tape, const data::EpisodeSequence& seq,
                                        HistoryState h0, RngStream& rng,
                                        const ForwardOptions& opt) const {
  if (seq.episodes.empty()) throw Error::structure("forward_sequence: empty sequence");
  if (opt.n_samples < 1) throw Error::config("forward_sequence: n_samples must be >= 1");
  const auto& first = seq.episodes.front();
  const int v = first.num_nodes();
  for (const auto& ep : seq.episodes) {
    if (ep.num_nodes() != v || ep.n_way != first.n_way || ep.k_shot != first.k_shot ||
        ep.query_count != first.query_count) {
      throw Error::structure("forward_sequence: episodes disagree on (N, K, Q) slot layout");
    }
  }
  if (static_cast<int>(h0.h.size()) != cfg_.layers) {
    throw Error::structure("forward_sequence: history has " + std::to_string(h0.h.size()) +
                           " layers, model has " + std::to_string(cfg_.layers));
  }
  for (const auto& h : h0.h) {
    if (h.shape() != Shape{v, cfg_.dim}) {
      throw Error::structure("forward_sequence: history state shape " + shape_str(h.shape()) +
                             " does not match [" + std::to_string(v) + "," +
                             std::to_string(cfg_.dim) + "]");
    }
  }

  ForwardResult result;
  HistoryState state = std::move(h0);
  for (const auto& ep : seq.episodes) {
    RngStream ep_rng = rng.substream(static_cast<std::uint64_t>(state.step));
    RngStream drop_rng = ep_rng.substream(kRngDropout);
    RngStream post_rng = ep_rng.substream(kRngPosterior);

    graph::EpisodeGraph g = graph::build_graph(ep);
    if (g.nodes.cols() != cfg_.input_dim) {
      throw Error::structure("forward_sequence: feature dim " + std::to_string(g.nodes.cols()) +
                             " does not match model input_dim " + std::to_string(cfg_.input_dim));
    }

    EpisodeOutput out;
    Tensor a = graph::normalize_adjacency(tape, g.a0).a;
    out.a0_normalized = a;
    Tensor feats = g.nodes;
    std::vector<Tensor> a_layers;
    a_layers.reserve(static_cast<std::size_t>(cfg_.layers));
    for (int k = 0; k < cfg_.layers; ++k) {
      Tensor vk = node_update(tape, feats, a, k, opt.train, drop_rng);
      Tensor hk = opt.no_history
                      ? vk
                      : history_transition(tape, vk, state.h[static_cast<std::size_t>(k)], k);
      state.h[static_cast<std::size_t>(k)] = hk;
      a = edge_update(tape, hk, k, opt.train, drop_rng).a;
      a_layers.push_back(a);
      out.layer_nodes.push_back(vk);
      out.layer_hidden.push_back(hk);
      out.layer_adjacency.push_back(a);
      feats = hk;  // history-melded features feed the next block
    }

    out.sample_predictions.resize(static_cast<std::size_t>(cfg_.layers));
    if (opt.no_bayes) {
      Tensor w = Tensor::scalar(1.0), b = Tensor::scalar(0.0);
      for (int k = 0; k < cfg_.layers; ++k) {
        Tensor p = masked_prediction(tape, a_layers[static_cast<std::size_t>(k)], w, b, g.mq, g.ms);
        out.sample_predictions[static_cast<std::size_t>(k)] = {p};
        out.layer_predictions.push_back(p);
      }
    } else {
      out.posterior = amortize_posterior(tape, state.h.back());
      for (int s = 0; s < opt.n_samples; ++s) {
        Tensor psi = gaussian_sample(tape, out.posterior.mu, out.posterior.sigma2, post_rng);
        Tensor w = select(tape, psi, 0), b = select(tape, psi, 1);
        for (int k = 0; k < cfg_.layers; ++k) {
          out.sample_predictions[static_cast<std::size_t>(k)].push_back(
              masked_prediction(tape, a_layers[static_cast<std::size_t>(k)], w, b, g.mq, g.ms));
        }
      }
      for (int k = 0; k < cfg_.layers; ++k) {
        const auto& samples = out.sample_predictions[static_cast<std::size_t>(k)];
        Tensor acc = samples[0];
        for (std::size_t s = 1; s < samples.size(); ++s) acc = add(tape, acc, samples[s]);
        out.layer_predictions.push_back(
            samples.size() == 1 ? acc : mul_scalar(tape, acc, 1.0 / static_cast<double>(samples.size())));
      }
    }
    out.graph = std::move(g);
    result.episodes.push_back(std::move(out));
    state.step += 1;
  }

  result.final_state.step = state.step;
  result.final_state.h.reserve(state.h.size());
  for (const auto& h : state.h) result.final_state.h.push_back(h.detach());
  return result;
}

std::vector<int> predict_labels(const Tensor& p, const data::Episode& ep) {
  const int v = ep.num_nodes();
  if (p.shape() != Shape{v, v}) {
    throw Error::dimension("predict_labels: prediction shape " + shape_str(p.shape()) +
                           " does not match " + std::to_string(v) + " nodes");
  }
  const int ns = static_cast<int>(ep.support.size());
  std::vector<int> out;
  out.reserve(ep.query.size());
  for (std::size_t q = 0; q < ep.query.size(); ++q) {
    const int row = ns + static_cast<int>(q);
    int best_slot = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < ep.n_way; ++c) {
      double acc = 0.0;
      int count = 0;
      for (int j = 0; j < ns; ++j) {
        const auto& it = ep.support[static_cast<std::size_t>(j)];
        if (it.labeled && it.slot == c) {
          acc += p.at(row, j);
          ++count;
        }
      }
      if (count == 0) continue;
      const double score = acc / count;
      if (score > best_score) {
        best_score = score;
        best_slot = c;
      }
    }
    if (best_slot < 0) throw Error::structure("predict_labels: no labeled support in episode");
    out.push_back(best_slot);
  }
  return out;
}

std::vector<int> prototype_baseline(const data::Episode& ep) {
  const auto d = ep.support.empty() ? 0 : ep.support.front().feature.size();
  std::vector<std::vector<double>> proto(static_cast<std::size_t>(ep.n_way),
                                         std::vector<double>(d, 0.0));
  std::vector<int> counts(static_cast<std::size_t>(ep.n_way), 0);
  for (const auto& it : ep.support) {
    if (!it.labeled) continue;
    auto& m = proto[static_cast<std::size_t>(it.slot)];
    for (std::size_t c = 0; c < d; ++c) m[c] += it.feature[c];
    ++counts[static_cast<std::size_t>(it.slot)];
  }
  for (int s = 0; s < ep.n_way; ++s) {
    if (counts[static_cast<std::size_t>(s)] == 0) {
      throw Error::baseline("prototype_baseline: class slot " + std::to_string(s) +
                            " has no labeled support");
    }
    for (auto& v : proto[static_cast<std::size_t>(s)]) v /= counts[static_cast<std::size_t>(s)];
  }
  std::vector<int> out;
  out.reserve(ep.query.size());
  for (const auto& q : ep.query) {
    int best_slot = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < ep.n_way; ++s) {
      const auto& m = proto[static_cast<std::size_t>(s)];
      double dot = 0.0, norm2 = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        dot += q.feature[c] * m[c];
        norm2 += m[c] * m[c];
      }
      const double score = dot - 0.5 * norm2;
      if (score > best_score) {
        best_score = score;
        best_slot = s;
      }
    }
    out.push_back(best_slot);
  }
  return out;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const ModelConfig& cfg, const ModelParams& params, const std::string& path) {
  nlohmann::ordered_json j;
  j["format"] = "bgnn-checkpoint-v1";
  j["config"] = {{"input_dim", cfg.input_dim}, {"dim", cfg.dim},
                 {"layers", cfg.layers},       {"dropout", cfg.dropout},
                 {"leaky_slope", cfg.leaky_slope}, {"sigma2_floor", cfg.sigma2_floor}};
  auto arr = nlohmann::ordered_json::array();
  const auto names = params.names();
  const auto tensors = params.all();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    nlohmann::ordered_json pj;
    pj["name"] = names[i];
    pj["shape"] = tensors[i].shape();
    pj["data"] = std::vector<double>(tensors[i].data().begin(), tensors[i].data().end());
    arr.push_back(std::move(pj));
  }
  j["params"] = std::move(arr);
  std::ofstream out(path);
  if (!out) throw Error::io("cannot open checkpoint '" + path + "' for writing");
  out << j.dump() << '\n';
  if (!out) throw Error::io("failed writing checkpoint '" + path + "'");
}

std::pair<ModelConfig, ModelParams> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error::io("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw Error::parse("checkpoint '" + path + "': " + e.what());
  }
  if (j.value("format", "") != "bgnn-checkpoint-v1") {
    throw Error::parse("checkpoint '" + path + "': unknown format");
  }
  ModelConfig cfg;
  const auto& cj = j.at("config");
  cfg.input_dim = cj.at("input_dim").get<int>();
  cfg.dim = cj.at("dim").get<int>();
  cfg.layers = cj.at("layers").get<int>();
  cfg.dropout = cj.at("dropout").get<double>();
  cfg.leaky_slope = cj.at("leaky_slope").get<double>();
  cfg.sigma2_floor = cj.at("sigma2_floor").get<double>();

  RngStream scratch(0);
  ModelParams params = ModelParams::init(cfg, scratch);
  const auto names = params.names();
  auto tensors = params.all();
  const auto& arr = j.at("params");
  if (arr.size() != tensors.size()) {
    throw Error::parse("checkpoint '" + path + "': expected " + std::to_string(tensors.size()) +
                       " tensors, found " + std::to_string(arr.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& pj = arr[i];
    if (pj.at("name").get<std::string>() != names[i]) {
      throw Error::parse("checkpoint '" + path + "': tensor " + std::to_string(i) + " named '" +
                         pj.at("name").get<std::string>() + "', expected '" + names[i] + "'");
    }
    const auto shape = pj.at("shape").get<Shape>();
    if (shape != tensors[i].shape()) {
      throw Error::parse("checkpoint '" + path + "': shape mismatch for '" + names[i] + "'");
    }
    const auto data = pj.at("data").get<std::vector<double>>();
    if (data.size() != static_cast<std::size_t>(tensors[i].size())) {
      throw Error::parse("checkpoint '" + path + "': data length mismatch for '" + names[i] + "'");
    }
    for (double v : data) {
      if (!std::isfinite(v)) {
        throw Error::parse("checkpoint '" + path + "': non-finite value in '" + names[i] + "'");
      }
    }
    auto dst = tensors[i].mutable_data();
    std::copy(data.begin(), data.end(), dst.begin());
  }
  return {cfg, std::move(params)};
}

}  // namespace bgnn::model
