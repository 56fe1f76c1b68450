#include "bgnn/graph.hpp"

#include <string>

#include "bgnn/error.hpp"

namespace bgnn::graph {
namespace {

constexpr double kDegreeEps = 1e-12;

struct NodeView {
  std::vector<int> slot;
  std::vector<bool> is_query;
  std::vector<bool> labeled;
};

NodeView flatten(const data::Episode& ep) {
  NodeView nv;
  const auto v = static_cast<std::size_t>(ep.num_nodes());
  nv.slot.reserve(v);
  nv.is_query.reserve(v);
  nv.labeled.reserve(v);
  for (const auto& it : ep.support) {
    nv.slot.push_back(it.slot);
    nv.is_query.push_back(false);
    nv.labeled.push_back(it.labeled);
  }
  for (const auto& it : ep.query) {
    nv.slot.push_back(it.slot);
    nv.is_query.push_back(true);
    nv.labeled.push_back(false);
  }
  return nv;
}

}  // namespace

Tensor init_adjacency(const data::Episode& ep) {
  const auto nv = flatten(ep);
  const int v = ep.num_nodes();
  std::vector<double> a(static_cast<std::size_t>(v) * v, 0.5);
  for (int i = 0; i < v; ++i) {
    for (int j = 0; j < v; ++j) {
      if (i == j) {
        a[static_cast<std::size_t>(i) * v + j] = 1.0;
      } else if (nv.labeled[static_cast<std::size_t>(i)] &&
                 nv.labeled[static_cast<std::size_t>(j)]) {
        a[static_cast<std::size_t>(i) * v + j] =
            nv.slot[static_cast<std::size_t>(i)] == nv.slot[static_cast<std::size_t>(j)] ? 1.0
                                                                                         : 0.0;
      }
    }
  }
  return Tensor::from_data({v, v}, std::move(a));
}

NormalizedAdjacency normalize_adjacency(Tape& tape, const Tensor& a_tilde) {
  if (a_tilde.shape().size() != 2 || a_tilde.rows() != a_tilde.cols()) {
    throw Error::dimension("normalize_adjacency: expected square matrix, got " +
                           shape_str(a_tilde.shape()));
  }
  const int v = a_tilde.rows();
  for (std::int64_t i = 0; i < a_tilde.size(); ++i) {
    if (a_tilde[i] < 0.0) {
      throw Error::domain("normalize_adjacency: negative entry at flat index " +
                          std::to_string(i));
    }
  }
  for (int i = 0; i < v; ++i) {
    double deg = 0.0;
    for (int j = 0; j < v; ++j) deg += a_tilde.at(i, j);
    if (deg <= 0.0) {
      throw Error::numeric("normalize_adjacency: zero degree at row " + std::to_string(i));
    }
  }

  Tensor deg = row_sum(tape, a_tilde);                          // [v,1]
  Tensor r = rsqrt(tape, add_scalar(tape, deg, kDegreeEps));    // [v,1]
  Tensor outer = matmul(tape, r, transpose(tape, r));           // [v,v]
  Tensor a = mul(tape, a_tilde, outer);

  NormalizedAdjacency out;
  out.a = a;
  out.degree = reshape(tape, deg, {v});
  return out;
}

std::pair<Tensor, Tensor> build_masks(const data::Episode& ep) {
  const auto nv = flatten(ep);
  const int v = ep.num_nodes();
  std::vector<double> mq(static_cast<std::size_t>(v) * v, 0.0);
  std::vector<double> ms(mq.size(), 0.0);
  for (int i = 0; i < v; ++i) {
    for (int j = 0; j < v; ++j) {
      if (nv.is_query[static_cast<std::size_t>(i)]) mq[static_cast<std::size_t>(i) * v + j] = 1.0;
      if (!nv.is_query[static_cast<std::size_t>(j)] && nv.labeled[static_cast<std::size_t>(j)]) {
        ms[static_cast<std::size_t>(i) * v + j] = 1.0;
      }
    }
  }
  return {Tensor::from_data({v, v}, std::move(mq)), Tensor::from_data({v, v}, std::move(ms))};
}

std::pair<Tensor, Tensor> edge_targets(const data::Episode& ep) {
  const auto nv = flatten(ep);
  const int v = ep.num_nodes();
  std::vector<double> targets(static_cast<std::size_t>(v) * v, 0.0);
  std::vector<double> valid(targets.size(), 0.0);
  for (int i = 0; i < v; ++i) {
    for (int j = 0; j < v; ++j) {
      if (nv.slot[static_cast<std::size_t>(i)] == nv.slot[static_cast<std::size_t>(j)]) {
        targets[static_cast<std::size_t>(i) * v + j] = 1.0;
      }
      if (nv.is_query[static_cast<std::size_t>(i)] && !nv.is_query[static_cast<std::size_t>(j)] &&
          nv.labeled[static_cast<std::size_t>(j)]) {
        valid[static_cast<std::size_t>(i) * v + j] = 1.0;
      }
    }
  }
  return {Tensor::from_data({v, v}, std::move(targets)),
          Tensor::from_data({v, v}, std::move(valid))};
}

EpisodeGraph build_graph(const data::Episode& ep) {
  if (ep.num_nodes() < 1) throw Error::structure("build_graph: empty episode");
  const int v = ep.num_nodes();
  const auto d = static_cast<int>(ep.support.empty() ? ep.query.front().feature.size()
                                                     : ep.support.front().feature.size());
  std::vector<double> nodes;
  nodes.reserve(static_cast<std::size_t>(v) * d);
  auto push = [&](const data::Item& it) {
    if (static_cast<int>(it.feature.size()) != d) {
      throw Error::structure("build_graph: inconsistent feature dimension");
    }
    nodes.insert(nodes.end(), it.feature.begin(), it.feature.end());
  };
  for (const auto& it : ep.support) push(it);
  for (const auto& it : ep.query) push(it);

  EpisodeGraph g;
  g.nodes = Tensor::from_data({v, d}, std::move(nodes));
  g.a0 = init_adjacency(ep);
  auto masks = build_masks(ep);
  g.mq = std::move(masks.first);
  g.ms = std::move(masks.second);
  auto tg = edge_targets(ep);
  g.edge_targets = std::move(tg.first);
  g.valid_mask = std::move(tg.second);
  const auto nv = flatten(ep);
  g.slot = nv.slot;
  g.is_query = nv.is_query;
  g.labeled = nv.labeled;
  g.n_way = ep.n_way;
  return g;
}

}  // namespace bgnn::graph
