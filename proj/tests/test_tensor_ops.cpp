#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "bgnn/error.hpp"
#include "bgnn/gradcheck.hpp"
#include "bgnn/ops.hpp"
#include "bgnn/rng.hpp"
#include "test_util.hpp"

using namespace bgnn;
using bgnn::test::bitwise_equal;

namespace {

Tensor random_tensor(Shape shape, RngStream& rng, double lo, double hi, bool requires_grad) {
  std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : data) v = lo + (hi - lo) * rng.uniform();
  return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

// Random fixed projection making a scalar out of any tensor, so gradient
// checks see non-uniform output weights.
Tensor project(Tape& tape, const Tensor& x, RngStream& rng) {
  std::vector<double> w(static_cast<std::size_t>(x.size()));
  for (auto& v : w) v = 2.0 * rng.uniform() - 1.0;
  Tensor c = Tensor::from_data(x.shape(), std::move(w));
  return sum(tape, mul(tape, x, c));
}

}  // namespace

TEST_CASE("tensor: creation validates shape, length and finiteness") {
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.0, 2.0}, false), Error);
  CHECK_THROWS_AS(Tensor::from_data({2}, {1.0, std::nan("")}, false), Error);
  CHECK_THROWS_AS(Tensor::from_data({0}, {}, false), Error);
  Tensor t = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  CHECK(t.grad().empty());
  CHECK(t.at(1, 0) == 3.0);
}

TEST_CASE("linear: identity case") {
  Tape tape;
  Tensor x = Tensor::from_data({1, 2}, {1, 2});
  Tensor w = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor b = Tensor::zeros({2});
  Tensor y = linear(tape, x, w, b);
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 2.0);
}

TEST_CASE("linear: hand matrix product [[1,1]] x [[2,3],[4,5]] + [1,1] = [[7,9]]") {
  Tape tape;
  Tensor x = Tensor::from_data({1, 2}, {1, 1});
  Tensor w = Tensor::from_data({2, 2}, {2, 3, 4, 5});
  Tensor b = Tensor::from_data({2}, {1, 1});
  Tensor y = linear(tape, x, w, b);
  CHECK(y[0] == 7.0);
  CHECK(y[1] == 9.0);
}

TEST_CASE("linear: backward of sum(y) w.r.t. b is all ones") {
  Tape tape;
  RngStream rng(1);
  Tensor x = random_tensor({3, 2}, rng, -1, 1, false);
  Tensor w = random_tensor({2, 4}, rng, -1, 1, true);
  Tensor b = Tensor::zeros({4}, true);
  Tensor loss = sum(tape, linear(tape, x, w, b));
  tape.backward(loss);
  for (int j = 0; j < 4; ++j) CHECK(b.grad_at(j) == doctest::Approx(3.0));  // 3 rows
}

TEST_CASE("linear: shape mismatch raises dimension error") {
  Tape tape;
  Tensor x = Tensor::from_data({1, 3}, {1, 2, 3});
  Tensor w = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor b = Tensor::zeros({2});
  CHECK_THROWS_AS(linear(tape, x, w, b), Error);
}

TEST_CASE("elementwise: fixed values") {
  Tape tape;
  Tensor x0 = Tensor::scalar(0.0);
  CHECK(sigmoid(tape, x0)[0] == doctest::Approx(0.5));
  CHECK(tanh(tape, x0)[0] == 0.0);
  CHECK(softplus(tape, x0)[0] == doctest::Approx(std::numbers::ln2));
  Tensor neg = Tensor::scalar(-1.0);
  CHECK(leaky_relu(tape, neg, 0.01)[0] == doctest::Approx(-0.01));
  CHECK_THROWS_AS(log(tape, Tensor::scalar(0.0)), Error);
  CHECK_THROWS_AS(log(tape, Tensor::scalar(-1.0)), Error);
  CHECK_THROWS_AS(rsqrt(tape, Tensor::scalar(0.0)), Error);
}

TEST_CASE("dropout: rate 0 and eval mode are the identity") {
  Tape tape;
  RngStream rng(2);
  Tensor x = random_tensor({4, 4}, rng, -1, 1, true);
  Tensor y0 = dropout(tape, x, 0.0, true, rng);
  CHECK(y0.same_node(x));
  Tensor y1 = dropout(tape, x, 0.9, false, rng);
  CHECK(y1.same_node(x));
  CHECK_THROWS_AS(dropout(tape, x, 1.0, true, rng), Error);
  CHECK_THROWS_AS(dropout(tape, x, -0.1, true, rng), Error);
}

TEST_CASE("dropout: survivor fraction 0.7 +- 0.01 at rate 0.3 over 1e5 entries") {
  Tape tape;
  RngStream rng(9);
  Tensor x = Tensor::full({100000}, 1.0);
  Tensor y = dropout(tape, x, 0.3, true, rng);
  const double scale = 1.0 / 0.7;
  std::int64_t survivors = 0;
  for (std::int64_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0) {
      CHECK(y[i] == doctest::Approx(scale));
      ++survivors;
    }
  }
  CHECK(std::abs(survivors / 1e5 - 0.7) < 0.01);
}

TEST_CASE("gaussian_sample: degenerate variance returns mu exactly") {
  Tape tape;
  RngStream rng(3);
  Tensor mu = Tensor::from_data({3}, {0.5, -1.5, 2.0}, true);
  Tensor s2 = Tensor::zeros({3});
  Tensor y = gaussian_sample(tape, mu, s2, rng);
  CHECK(bitwise_equal(y, mu));
  // d(out)/d(mu) is exactly 1.
  Tensor loss = sum(tape, y);
  tape.backward(loss);
  for (int i = 0; i < 3; ++i) CHECK(mu.grad_at(i) == 1.0);
}

TEST_CASE("gaussian_sample: moment check at 1e5 draws") {
  Tape tape;
  RngStream rng(17);
  const int n = 100000;
  Tensor mu = Tensor::zeros({n});
  Tensor s2 = Tensor::full({n}, 1.0);
  Tensor y = gaussian_sample(tape, mu, s2, rng);
  double sum = 0.0, sum2 = 0.0;
  for (std::int64_t i = 0; i < y.size(); ++i) {
    sum += y[i];
    sum2 += y[i] * y[i];
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("gaussian_sample: fixed (seed, counter) gives identical draws") {
  Tape t1, t2;
  Tensor mu = Tensor::zeros({8});
  Tensor s2 = Tensor::full({8}, 2.5);
  RngStream r1(123, 9), r2(123, 9);
  CHECK(bitwise_equal(gaussian_sample(t1, mu, s2, r1), gaussian_sample(t2, mu, s2, r2)));
}

TEST_CASE("gaussian_sample: negative variance raises domain error") {
  Tape tape;
  RngStream rng(3);
  Tensor mu = Tensor::zeros({2});
  Tensor s2 = Tensor::from_data({2}, {0.1, -0.1});
  CHECK_THROWS_AS(gaussian_sample(tape, mu, s2, rng), Error);
}

TEST_CASE("tape: identical seeds give bit-identical forward values and gradients") {
  auto build = [](std::vector<double>* grads) {
    RngStream rng(77);
    Tape tape;
    Tensor x = random_tensor({3, 3}, rng, -1, 1, true);
    Tensor w = random_tensor({3, 3}, rng, -1, 1, true);
    RngStream drop = rng.substream(5);
    Tensor y = dropout(tape, sigmoid(tape, matmul(tape, x, w)), 0.25, true, drop);
    Tensor loss = mean(tape, y);
    tape.backward(loss);
    grads->clear();
    for (std::int64_t i = 0; i < x.size(); ++i) grads->push_back(x.grad_at(i));
    for (std::int64_t i = 0; i < w.size(); ++i) grads->push_back(w.grad_at(i));
    return loss.value();
  };
  std::vector<double> g1, g2;
  const double v1 = build(&g1);
  const double v2 = build(&g2);
  CHECK(v1 == v2);
  REQUIRE(g1.size() == g2.size());
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

// Every primitive's backward against central differences on randomized small
// shapes; > 100 instances in total.
TEST_CASE("ops: per-primitive gradient property check") {
  constexpr double kEps = 1e-6;
  constexpr double kTol = 1e-4;
  RngStream meta(2026);

  auto check = [&](const std::function<Tensor(Tape&)>& f, std::span<const Tensor> params) {
    const auto report = grad_check(f, params, kEps, kTol);
    CHECK_MESSAGE(report.pass, report.summary());
  };

  for (int instance = 0; instance < 6; ++instance) {
    RngStream rng = meta.substream(static_cast<std::uint64_t>(instance));
    const int n = 1 + static_cast<int>(rng.uniform_int(4));
    const int k = 1 + static_cast<int>(rng.uniform_int(4));
    const int m = 1 + static_cast<int>(rng.uniform_int(4));

    {  // matmul
      Tensor a = random_tensor({n, k}, rng, -2, 2, true);
      Tensor b = random_tensor({k, m}, rng, -2, 2, true);
      RngStream prj = rng.substream(1);
      std::vector<Tensor> ps{a, b};
      check([&](Tape& t) { RngStream p = prj; return project(t, matmul(t, a, b), p); }, ps);
    }
    {  // linear
      Tensor x = random_tensor({n, k}, rng, -2, 2, true);
      Tensor w = random_tensor({k, m}, rng, -2, 2, true);
      Tensor b = random_tensor({m}, rng, -1, 1, true);
      RngStream prj = rng.substream(2);
      std::vector<Tensor> ps{x, w, b};
      check([&](Tape& t) { RngStream p = prj; return project(t, linear(t, x, w, b), p); }, ps);
    }
    {  // add / sub / mul
      Tensor a = random_tensor({n, m}, rng, -2, 2, true);
      Tensor b = random_tensor({n, m}, rng, -2, 2, true);
      RngStream prj = rng.substream(3);
      std::vector<Tensor> ps{a, b};
      check([&](Tape& t) { RngStream p = prj; return project(t, add(t, a, b), p); }, ps);
      check([&](Tape& t) { RngStream p = prj; return project(t, sub(t, a, b), p); }, ps);
      check([&](Tape& t) { RngStream p = prj; return project(t, mul(t, a, b), p); }, ps);
    }
    {  // scalar constants and broadcasts
      Tensor x = random_tensor({n, m}, rng, -2, 2, true);
      Tensor s = random_tensor({1}, rng, -2, 2, true);
      RngStream prj = rng.substream(4);
      std::vector<Tensor> ps{x, s};
      check([&](Tape& t) { RngStream p = prj; return project(t, add_scalar(t, x, 0.7), p); }, ps);
      check([&](Tape& t) { RngStream p = prj; return project(t, mul_scalar(t, x, -1.3), p); }, ps);
      check([&](Tape& t) { RngStream p = prj; return project(t, scalar_mul(t, s, x), p); }, ps);
      check([&](Tape& t) { RngStream p = prj; return project(t, scalar_add(t, s, x), p); }, ps);
    }
    {  // structural ops
      Tensor a = random_tensor({n, k}, rng, -2, 2, true);
      Tensor b = random_tensor({n, m}, rng, -2, 2, true);
      RngStream prj = rng.substream(5);
      const auto idx = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint32_t>(n * k)));
      std::vector<Tensor> ps{a, b};
      check([&](Tape& t) { RngStream p = prj; return project(t, concat_cols(t, a, b), p); }, ps);
      check([&](Tape& t) { RngStream p = prj; return project(t, transpose(t, a), p); }, ps);
      check([&](Tape& t) { RngStream p = prj; return project(t, reshape(t, a, {k, n}), p); }, ps);
      check([&](Tape& t) { return select(t, a, idx); }, ps);
    }
    {  // reductions and clamp
      Tensor x = random_tensor({n, m}, rng, -1.2, 1.2, true);
      RngStream prj = rng.substream(6);
      std::vector<Tensor> ps{x};
      check([&](Tape& t) { RngStream p = prj; return project(t, row_sum(t, x), p); }, ps);
      check([&](Tape& t) { RngStream p = prj; return project(t, col_mean(t, x), p); }, ps);
      check([&](Tape& t) { return sum(t, x); }, ps);
      check([&](Tape& t) { return mean(t, x); }, ps);
      check([&](Tape& t) { RngStream p = prj; return project(t, clamp(t, x, -1.5, 1.5), p); }, ps);
    }
    {  // smooth elementwise maps
      Tensor x = random_tensor({n, m}, rng, -2, 2, true);
      Tensor pos = random_tensor({n, m}, rng, 0.4, 3.0, true);
      RngStream prj = rng.substream(7);
      std::vector<Tensor> px{x};
      std::vector<Tensor> pp{pos};
      check([&](Tape& t) { RngStream p = prj; return project(t, sigmoid(t, x), p); }, px);
      check([&](Tape& t) { RngStream p = prj; return project(t, tanh(t, x), p); }, px);
      check([&](Tape& t) { RngStream p = prj; return project(t, exp(t, x), p); }, px);
      check([&](Tape& t) { RngStream p = prj; return project(t, softplus(t, x), p); }, px);
      check([&](Tape& t) { RngStream p = prj; return project(t, log(t, pos), p); }, pp);
      check([&](Tape& t) { RngStream p = prj; return project(t, rsqrt(t, pos), p); }, pp);
    }
    {  // leaky relu away from the kink
      std::vector<double> data(static_cast<std::size_t>(n) * m);
      for (auto& v : data) {
        const double mag = 0.05 + 1.5 * rng.uniform();
        v = rng.uniform() < 0.5 ? -mag : mag;
      }
      Tensor x = Tensor::from_data({n, m}, std::move(data), true);
      RngStream prj = rng.substream(8);
      std::vector<Tensor> ps{x};
      check([&](Tape& t) { RngStream p = prj; return project(t, leaky_relu(t, x, 0.01), p); }, ps);
    }
    {  // dropout with a replayed mask
      Tensor x = random_tensor({n, m}, rng, -2, 2, true);
      RngStream prj = rng.substream(9);
      std::vector<Tensor> ps{x};
      check([&](Tape& t) {
        RngStream drop(424242, 0);
        RngStream p = prj;
        return project(t, dropout(t, x, 0.4, true, drop), p);
      }, ps);
    }
    {  // gaussian_sample via the reparameterization path
      Tensor mu = random_tensor({n, m}, rng, -1, 1, true);
      Tensor s2 = random_tensor({n, m}, rng, 0.2, 2.0, true);
      RngStream prj = rng.substream(10);
      std::vector<Tensor> ps{mu, s2};
      check([&](Tape& t) {
        RngStream draw(777, 0);
        RngStream p = prj;
        return project(t, gaussian_sample(t, mu, s2, draw), p);
      }, ps);
    }
    {  // pairwise_absdiff
      Tensor h = random_tensor({n + 1, m}, rng, -2, 2, true);
      RngStream prj = rng.substream(11);
      std::vector<Tensor> ps{h};
      check([&](Tape& t) { RngStream p = prj; return project(t, pairwise_absdiff(t, h), p); }, ps);
    }
    {  // layer_norm
      const int d = m + 1;  // avoid degenerate single-column rows
      Tensor x = random_tensor({n, d}, rng, -2, 2, true);
      Tensor g = random_tensor({d}, rng, 0.5, 1.5, true);
      Tensor b = random_tensor({d}, rng, -0.5, 0.5, true);
      RngStream prj = rng.substream(12);
      std::vector<Tensor> ps{x, g, b};
      check([&](Tape& t) { RngStream p = prj; return project(t, layer_norm(t, x, g, b), p); }, ps);
    }
  }
}
