#include "bgnn/episode.hpp"

#include <algorithm>
#include <cmath>

#include "bgnn/error.hpp"

namespace bgnn::data {
namespace {

void check_episode_request(int n_way, int k_shot, int query_count) {
  if (n_way < 2) throw Error::config("episode: n_way must be >= 2");
  if (k_shot < 1) throw Error::config("episode: k_shot must be >= 1");
  if (query_count < 0) throw Error::config("episode: query_count must be >= 0");
}

// Uniform draw of `count` distinct elements; the first `count` entries of the
// returned vector, in draw order.
std::vector<std::int64_t> draw_without_replacement(std::vector<std::int64_t> pool,
                                                   std::size_t count, RngStream& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j =
        i + rng.uniform_int(static_cast<std::uint32_t>(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

Episode sample_items(const Dataset& ds, const std::vector<int>& slot_classes, int k_shot,
                     int query_count, RngStream& rng) {
  const int n_way = static_cast<int>(slot_classes.size());
  Episode ep;
  ep.n_way = n_way;
  ep.k_shot = k_shot;
  ep.query_count = query_count;
  ep.slot_class = slot_classes;
  ep.support.reserve(static_cast<std::size_t>(n_way) * k_shot);
  ep.query.reserve(static_cast<std::size_t>(query_count));

  std::vector<std::vector<std::int64_t>> picked(static_cast<std::size_t>(n_way));
  for (int s = 0; s < n_way; ++s) {
    const int need = k_shot + ep.queries_for_slot(s);
    const auto& pool = ds.items_of_class(slot_classes[static_cast<std::size_t>(s)]);
    if (static_cast<int>(pool.size()) < need) {
      throw Error::sampling("class " + std::to_string(slot_classes[static_cast<std::size_t>(s)]) +
                            " has " + std::to_string(pool.size()) + " items, need " +
                            std::to_string(need));
    }
    picked[static_cast<std::size_t>(s)] =
        draw_without_replacement(pool, static_cast<std::size_t>(need), rng);
  }
  for (int s = 0; s < n_way; ++s) {
    for (int k = 0; k < k_shot; ++k) {
      const auto idx = picked[static_cast<std::size_t>(s)][static_cast<std::size_t>(k)];
      auto feat = ds.item(idx);
      ep.support.push_back({{feat.begin(), feat.end()}, s, true});
    }
  }
  for (int s = 0; s < n_way; ++s) {
    const int q = ep.queries_for_slot(s);
    for (int k = 0; k < q; ++k) {
      const auto idx = picked[static_cast<std::size_t>(s)][static_cast<std::size_t>(k_shot + k)];
      auto feat = ds.item(idx);
      ep.query.push_back({{feat.begin(), feat.end()}, s, false});
    }
  }
  return ep;
}

}  // namespace

int Episode::queries_for_slot(int s) const {
  const int base = query_count / n_way;
  return base + (s < query_count % n_way ? 1 : 0);
}

Episode sample_episode(const Dataset& ds, int n_way, int k_shot, int query_count, RngStream& rng,
                       const std::vector<int>* class_pool) {
  check_episode_request(n_way, k_shot, query_count);
  std::vector<std::int64_t> pool;
  if (class_pool) {
    pool.assign(class_pool->begin(), class_pool->end());
    for (auto c : pool) {
      if (c < 0 || c >= ds.num_classes()) {
        throw Error::sampling("class pool entry " + std::to_string(c) + " out of range");
      }
    }
  } else {
    pool.resize(static_cast<std::size_t>(ds.num_classes()));
    for (int c = 0; c < ds.num_classes(); ++c) pool[static_cast<std::size_t>(c)] = c;
  }
  if (static_cast<int>(pool.size()) < n_way) {
    throw Error::sampling("need " + std::to_string(n_way) + " classes, pool has " +
                          std::to_string(pool.size()));
  }
  const auto chosen = draw_without_replacement(pool, static_cast<std::size_t>(n_way), rng);
  std::vector<int> slot_classes(chosen.size());
  for (std::size_t i = 0; i < chosen.size(); ++i) slot_classes[i] = static_cast<int>(chosen[i]);
  return sample_items(ds, slot_classes, k_shot, query_count, rng);
}

Episode sample_episode_with_classes(const Dataset& ds, const std::vector<int>& slot_classes,
                                    int k_shot, int query_count, RngStream& rng) {
  check_episode_request(static_cast<int>(slot_classes.size()), k_shot, query_count);
  return sample_items(ds, slot_classes, k_shot, query_count, rng);
}

EpisodeSequence build_sequence(const Dataset& ds, int length, int n_way, int k_shot,
                               int query_count, double rho, RngStream& rng,
                               const std::vector<int>* class_pool) {
  if (length < 1) throw Error::config("build_sequence: length must be >= 1");
  if (rho < 0.0 || rho > 1.0) throw Error::config("build_sequence: rho must lie in [0, 1]");
  EpisodeSequence seq;
  seq.rho = rho;
  seq.episodes.reserve(static_cast<std::size_t>(length));
  seq.episodes.push_back(sample_episode(ds, n_way, k_shot, query_count, rng, class_pool));
  for (int t = 1; t < length; ++t) {
    if (rng.uniform() < rho) {
      seq.episodes.push_back(sample_episode_with_classes(ds, seq.episodes.back().slot_class,
                                                         k_shot, query_count, rng));
    } else {
      seq.episodes.push_back(sample_episode(ds, n_way, k_shot, query_count, rng, class_pool));
    }
  }
  return seq;
}

Episode apply_label_budget(const Episode& ep, double labeled_fraction, RngStream& rng) {
  const int k = ep.k_shot;
  const auto keep = static_cast<int>(std::llround(labeled_fraction * k));
  if (keep < 1 || keep > k || std::abs(labeled_fraction * k - keep) > 1e-9) {
    throw Error::config("label budget " + std::to_string(labeled_fraction) +
                        " is not i/K for integer i in [1, " + std::to_string(k) + "]");
  }
  Episode out = ep;
  if (keep == k) return out;
  for (int s = 0; s < ep.n_way; ++s) {
    // Support is slot-major, so slot s occupies [s*K, (s+1)*K).
    std::vector<std::int64_t> offsets(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) offsets[static_cast<std::size_t>(i)] = s * k + i;
    const auto kept = draw_without_replacement(offsets, static_cast<std::size_t>(keep), rng);
    for (int i = 0; i < k; ++i) out.support[static_cast<std::size_t>(s * k + i)].labeled = false;
    for (auto o : kept) out.support[static_cast<std::size_t>(o)].labeled = true;
  }
  return out;
}

Episode drop_unlabeled(const Episode& ep) {
  Episode out;
  out.n_way = ep.n_way;
  out.query_count = ep.query_count;
  out.query = ep.query;
  out.slot_class = ep.slot_class;
  std::vector<int> per_slot(static_cast<std::size_t>(ep.n_way), 0);
  for (const auto& it : ep.support) {
    if (it.labeled) {
      out.support.push_back(it);
      ++per_slot[static_cast<std::size_t>(it.slot)];
    }
  }
  for (int s = 1; s < ep.n_way; ++s) {
    if (per_slot[static_cast<std::size_t>(s)] != per_slot[0]) {
      throw Error::structure("drop_unlabeled: uneven labeled counts across classes");
    }
  }
  if (per_slot[0] == 0) throw Error::structure("drop_unlabeled: no labeled support remains");
  out.k_shot = per_slot[0];
  return out;
}

}  // namespace bgnn::data
