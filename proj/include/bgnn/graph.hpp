#pragma once

#include <utility>
#include <vector>

#include "bgnn/episode.hpp"
#include "bgnn/ops.hpp"
#include "bgnn/tensor.hpp"

namespace bgnn::graph {

// Dense episode graph over V = |support| + |query| nodes, support first.
// a0 seeds edges from visible labels: 1 for same-class labeled support pairs,
// 0 for different-class labeled support pairs, 0.5 wherever either endpoint
// label is hidden; diagonal 1. mq selects query rows, ms labeled-support
// columns. edge_targets holds the ground-truth same-class indicator; the loss
// reads it only where valid_mask is 1 (query row, labeled support column).
struct EpisodeGraph {
  Tensor nodes;         // [V, d]
  Tensor a0;            // [V, V]
  Tensor mq;            // [V, V]
  Tensor ms;            // [V, V]
  Tensor edge_targets;  // [V, V]
  Tensor valid_mask;    // [V, V]
  std::vector<int> slot;        // ground-truth class slot per node
  std::vector<bool> is_query;   // per node
  std::vector<bool> labeled;    // label visible to the model
  int n_way = 0;

  int num_nodes() const { return static_cast<int>(slot.size()); }
};

struct NormalizedAdjacency {
  Tensor a;       // [V, V]
  Tensor degree;  // [V]
};

Tensor init_adjacency(const data::Episode& ep);

// Symmetric degree normalization a_ij / sqrt(deg_i * deg_j), differentiable
// through the input. Entries must be >= 0 and every row sum positive (a row
// with zero degree raises a numeric error naming the row). Degrees carry a
// 1e-12 guard inside the square root.
NormalizedAdjacency normalize_adjacency(Tape& tape, const Tensor& a_tilde);

std::pair<Tensor, Tensor> build_masks(const data::Episode& ep);      // (mq, ms)
std::pair<Tensor, Tensor> edge_targets(const data::Episode& ep);     // (targets, valid)

EpisodeGraph build_graph(const data::Episode& ep);

}  // namespace bgnn::graph
