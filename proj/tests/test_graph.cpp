#include <doctest.h>

#include <cmath>
#include <set>

#include "bgnn/error.hpp"
#include "bgnn/gradcheck.hpp"
#include "bgnn/graph.hpp"
#include "test_util.hpp"

using namespace bgnn;
using namespace bgnn::data;
using namespace bgnn::graph;

namespace {

Episode two_class_fixture() {
  // support: slots 0,0,1,1 (second item of slot 1 unlabeled), queries 0,1.
  Episode ep;
  ep.n_way = 2;
  ep.k_shot = 2;
  ep.query_count = 2;
  ep.slot_class = {0, 1};
  ep.support = {{{1.0, 0.0}, 0, true},
                {{0.9, 0.1}, 0, true},
                {{0.0, 1.0}, 1, true},
                {{0.1, 0.9}, 1, false}};
  ep.query = {{{0.8, 0.2}, 0, false}, {{0.2, 0.8}, 1, false}};
  return ep;
}

Episode random_budgeted_episode(RngStream& rng) {
  RngStream ds_rng = rng.substream(0);
  const auto ds = make_synthetic_dataset(8, 4, 0.5, 12, ds_rng);
  RngStream ep_rng = rng.substream(1);
  const int n = 2 + static_cast<int>(ep_rng.uniform_int(3));
  const int k = 1 + static_cast<int>(ep_rng.uniform_int(3));
  const int q = n + static_cast<int>(ep_rng.uniform_int(4));
  auto ep = sample_episode(ds, n, k, q, ep_rng);
  if (k > 1 && ep_rng.uniform() < 0.5) {
    const int keep = 1 + static_cast<int>(ep_rng.uniform_int(static_cast<std::uint32_t>(k)));
    ep = apply_label_budget(ep, static_cast<double>(keep) / k, ep_rng);
  }
  return ep;
}

}  // namespace

TEST_CASE("init_adjacency: labeled pairs follow the 1/0/0.5 cases, diagonal 1") {
  const auto ep = two_class_fixture();
  const auto a = init_adjacency(ep);
  // Labeled support, same class.
  CHECK(a.at(0, 1) == 1.0);
  // Labeled support, different classes.
  CHECK(a.at(0, 2) == 0.0);
  // Unlabeled support behaves like a query endpoint.
  CHECK(a.at(0, 3) == 0.5);
  CHECK(a.at(3, 2) == 0.5);
  // Query-support pairs.
  CHECK(a.at(4, 0) == 0.5);
  CHECK(a.at(5, 2) == 0.5);
  // Query-query pair.
  CHECK(a.at(4, 5) == 0.5);
  for (int i = 0; i < ep.num_nodes(); ++i) CHECK(a.at(i, i) == 1.0);
}

TEST_CASE("init_adjacency: symmetric with entries in {0, 0.5, 1}; labeled block is an equivalence relation") {
  RngStream meta(404);
  for (int trial = 0; trial < 50; ++trial) {
    RngStream rng = meta.substream(static_cast<std::uint64_t>(trial));
    const auto ep = random_budgeted_episode(rng);
    const auto a = init_adjacency(ep);
    const int v = ep.num_nodes();
    std::vector<int> slot;
    std::vector<bool> lab;
    for (const auto& it : ep.support) {
      slot.push_back(it.slot);
      lab.push_back(it.labeled);
    }
    for (const auto& it : ep.query) {
      slot.push_back(it.slot);
      lab.push_back(false);
    }
    for (int i = 0; i < v; ++i) {
      for (int j = 0; j < v; ++j) {
        const double e = a.at(i, j);
        CHECK((e == 0.0 || e == 0.5 || e == 1.0));
        CHECK(a.at(j, i) == e);
        if (i != j && lab[static_cast<std::size_t>(i)] && lab[static_cast<std::size_t>(j)]) {
          CHECK(e == (slot[static_cast<std::size_t>(i)] == slot[static_cast<std::size_t>(j)] ? 1.0 : 0.0));
        }
      }
    }
    // Reflexive + symmetric checked above; transitivity on the labeled block
    // holds because the entries are a class-equality indicator.
    for (int i = 0; i < v; ++i)
      for (int j = 0; j < v; ++j)
        for (int k = 0; k < v; ++k) {
          if (lab[static_cast<std::size_t>(i)] && lab[static_cast<std::size_t>(j)] &&
              lab[static_cast<std::size_t>(k)] && a.at(i, j) == 1.0 && a.at(j, k) == 1.0) {
            CHECK(a.at(i, k) == 1.0);
          }
        }
  }
}

TEST_CASE("normalize_adjacency: identity stays the identity") {
  Tape tape;
  Tensor eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const auto out = normalize_adjacency(tape, eye);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(out.a.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
    }
    CHECK(out.degree[i] == doctest::Approx(1.0));
  }
}

TEST_CASE("normalize_adjacency: all-ones 2x2 becomes all 0.5") {
  Tape tape;
  Tensor ones = Tensor::full({2, 2}, 1.0);
  const auto out = normalize_adjacency(tape, ones);
  for (std::int64_t i = 0; i < 4; ++i) CHECK(out.a[i] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("normalize_adjacency: symmetry preserved and scaling is equivariant") {
  RngStream rng(5);
  std::vector<double> vals(16);
  for (std::size_t i = 0; i < 16; ++i) vals[i] = 0.1 + rng.uniform();
  // symmetrize
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < i; ++j)
      vals[static_cast<std::size_t>(i) * 4 + j] = vals[static_cast<std::size_t>(j) * 4 + i];
  Tensor a = Tensor::from_data({4, 4}, vals);
  Tape tape;
  const auto na = normalize_adjacency(tape, a).a;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(na.at(i, j) == doctest::Approx(na.at(j, i)).epsilon(1e-12));

  Tensor scaled = mul_scalar(tape, a, 3.7);
  const auto ns = normalize_adjacency(tape, scaled).a;
  CHECK(bgnn::test::max_abs_diff(na, ns) < 1e-9);
}

TEST_CASE("normalize_adjacency: zero-degree row raises a numeric error naming the row") {
  Tape tape;
  Tensor a = Tensor::from_data({2, 2}, {1.0, 0.0, 0.0, 0.0});
  try {
    normalize_adjacency(tape, a);
    FAIL("expected numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
    CHECK(std::string(e.what()).find("row 1") != std::string::npos);
  }
  Tensor neg = Tensor::from_data({2, 2}, {1.0, -0.5, 1.0, 1.0});
  CHECK_THROWS_AS(normalize_adjacency(tape, neg), Error);
}

TEST_CASE("normalize_adjacency: differentiable through the input") {
  RngStream rng(8);
  std::vector<double> vals(9);
  for (auto& v : vals) v = 0.2 + rng.uniform();
  Tensor a = Tensor::from_data({3, 3}, vals, true);
  std::vector<Tensor> params{a};
  auto f = [&](Tape& t) {
    std::vector<double> w(9);
    RngStream prj(99);
    for (auto& v : w) v = prj.uniform() - 0.5;
    Tensor c = Tensor::from_data({3, 3}, w);
    return sum(t, mul(t, normalize_adjacency(t, a).a, c));
  };
  const auto report = grad_check(f, params, 1e-6, 1e-4);
  CHECK_MESSAGE(report.pass, report.summary());
}

TEST_CASE("build_masks: query rows and labeled support columns") {
  const auto ep = two_class_fixture();
  const auto [mq, ms] = build_masks(ep);
  const int v = ep.num_nodes();
  for (int i = 0; i < v; ++i) {
    for (int j = 0; j < v; ++j) {
      CHECK(mq.at(i, j) == (i >= 4 ? 1.0 : 0.0));
      CHECK(ms.at(i, j) == (j <= 2 ? 1.0 : 0.0));  // node 3 is unlabeled support
    }
  }
}

TEST_CASE("build_masks: 5-way 1-shot has 5 query rows and 5 support columns") {
  RngStream rng(3);
  const auto ds = make_synthetic_dataset(8, 4, 0.5, 10, rng);
  const auto ep = sample_episode(ds, 5, 1, 5, rng);
  const auto [mq, ms] = build_masks(ep);
  int rows = 0, cols = 0;
  for (int i = 0; i < ep.num_nodes(); ++i) {
    if (mq.at(i, 0) == 1.0) ++rows;
    if (ms.at(0, i) == 1.0) ++cols;
  }
  CHECK(rows == 5);
  CHECK(cols == 5);
}

TEST_CASE("build_masks: all-support episode has an all-zero query mask") {
  RngStream rng(3);
  const auto ds = make_synthetic_dataset(4, 4, 0.5, 6, rng);
  const auto ep = sample_episode(ds, 2, 2, 0, rng);
  const auto [mq, ms] = build_masks(ep);
  for (std::int64_t i = 0; i < mq.size(); ++i) CHECK(mq[i] == 0.0);
}

TEST_CASE("edge_targets: same-class indicator over query-support pairs") {
  const auto ep = two_class_fixture();
  const auto [targets, valid] = edge_targets(ep);
  // Query node 4 has slot 0: matches support 0, 1; mismatches 2.
  CHECK(targets.at(4, 0) == 1.0);
  CHECK(targets.at(4, 2) == 0.0);
  CHECK(valid.at(4, 0) == 1.0);
  CHECK(valid.at(4, 3) == 0.0);  // unlabeled support excluded
  CHECK(valid.at(4, 5) == 0.0);  // query-query excluded
  CHECK(valid.at(0, 1) == 0.0);  // support rows excluded
}

TEST_CASE("edge_targets: 5-way 1-shot with 5 queries has exactly 5 positive valid targets") {
  RngStream rng(21);
  const auto ds = make_synthetic_dataset(9, 4, 0.5, 8, rng);
  const auto ep = sample_episode(ds, 5, 1, 5, rng);
  const auto [targets, valid] = edge_targets(ep);
  int positives = 0;
  for (std::int64_t i = 0; i < targets.size(); ++i) {
    if (valid[i] == 1.0 && targets[i] == 1.0) ++positives;
  }
  CHECK(positives == 5);
}

TEST_CASE("masks: joint masking keeps only query-row / support-column entries") {
  RngStream meta(71);
  for (int trial = 0; trial < 20; ++trial) {
    RngStream rng = meta.substream(static_cast<std::uint64_t>(trial));
    const auto ep = random_budgeted_episode(rng);
    const auto g = build_graph(ep);
    Tape tape;
    std::vector<double> vals(static_cast<std::size_t>(g.num_nodes()) * g.num_nodes());
    for (auto& v : vals) v = rng.uniform() + 0.1;
    Tensor x = Tensor::from_data({g.num_nodes(), g.num_nodes()}, vals);
    Tensor masked = mul(tape, mul(tape, x, g.mq), g.ms);
    for (int i = 0; i < g.num_nodes(); ++i) {
      for (int j = 0; j < g.num_nodes(); ++j) {
        const bool keep = g.is_query[static_cast<std::size_t>(i)] &&
                          !g.is_query[static_cast<std::size_t>(j)] &&
                          g.labeled[static_cast<std::size_t>(j)];
        if (keep) {
          CHECK(masked.at(i, j) == x.at(i, j));
        } else {
          CHECK(masked.at(i, j) == 0.0);
        }
      }
    }
  }
}
