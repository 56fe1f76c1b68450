#pragma once

#include <optional>
#include <vector>

#include "bgnn/dataset.hpp"
#include "bgnn/rng.hpp"

namespace bgnn::data {

// One node-to-be: feature vector, class slot in [0, n_way), and whether the
// label is visible to the model. Query items always have labeled=false; their
// slot is ground truth used only for loss and scoring.
struct Item {
  std::vector<double> feature;
  int slot = 0;
  bool labeled = false;
};

// One N-way K-shot task. Support items are ordered slot-major (slot 0's K
// shots first), then queries slot-major, which fixes the node layout of the
// episode graph.
struct Episode {
  std::vector<Item> support;
  std::vector<Item> query;
  int n_way = 0;
  int k_shot = 0;
  int query_count = 0;
  std::vector<int> slot_class;  // dataset class behind each slot

  int num_nodes() const { return static_cast<int>(support.size() + query.size()); }
  // Queries for slot s: query_count/n_way each, first query_count%n_way slots
  // get one extra.
  int queries_for_slot(int s) const;
};

struct EpisodeSequence {
  std::vector<Episode> episodes;
  double rho = 0.0;
};

// Samples N distinct classes uniformly from the pool (whole dataset when
// absent); slot order is the draw order. Per class, K support and its query
// share are drawn without replacement and disjoint.
Episode sample_episode(const Dataset& ds, int n_way, int k_shot, int query_count, RngStream& rng,
                       const std::vector<int>* class_pool = nullptr);

// Same item-sampling as sample_episode but with a fixed class-per-slot
// assignment; used to keep slots aligned when a sequence reuses a class set.
Episode sample_episode_with_classes(const Dataset& ds, const std::vector<int>& slot_classes,
                                    int k_shot, int query_count, RngStream& rng);

// Episode chain: the first episode is sampled freely; each later one reuses
// the previous class set (keeping slot alignment) with probability rho, else
// resamples classes.
EpisodeSequence build_sequence(const Dataset& ds, int length, int n_way, int k_shot,
                               int query_count, double rho, RngStream& rng,
                               const std::vector<int>* class_pool = nullptr);

// Keeps exactly round(labeled_fraction * K) support labels per class and
// hides the rest. The fraction must be i/K for some integer i in [1, K].
Episode apply_label_budget(const Episode& ep, double labeled_fraction, RngStream& rng);

// Removes unlabeled support items (the LabeledOnly strategy). Every class
// must keep the same number of shots.
Episode drop_unlabeled(const Episode& ep);

}  // namespace bgnn::data
