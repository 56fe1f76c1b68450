#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "bgnn/error.hpp"
#include "bgnn/losses.hpp"
#include "bgnn/optimizer.hpp"
#include "test_util.hpp"

using namespace bgnn;
using namespace bgnn::train;
using bgnn::model::PosteriorParams;

TEST_CASE("edge_loss: perfect predictions cost (almost) nothing") {
  Tape tape;
  Tensor targets = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor valid = Tensor::full({2, 2}, 1.0);
  Tensor p = targets.clone(false);
  const auto loss = edge_loss(tape, {p}, targets, valid);
  CHECK(loss.value() < 1e-5);
  CHECK(loss.value() >= 0.0);
}

TEST_CASE("edge_loss: p = 0.5 everywhere costs ln 2 per entry") {
  Tape tape;
  Tensor targets = Tensor::from_data({2, 2}, {1, 0, 1, 0});
  Tensor valid = Tensor::full({2, 2}, 1.0);
  Tensor p = Tensor::full({2, 2}, 0.5);
  const auto loss = edge_loss(tape, {p, p}, targets, valid);  // two layers, same value
  CHECK(loss.value() == doctest::Approx(std::numbers::ln2).epsilon(1e-12));
}

TEST_CASE("edge_loss: gradient matches the analytic BCE derivative") {
  Tape tape;
  Tensor targets = Tensor::from_data({1, 2}, {1, 0});
  Tensor valid = Tensor::full({1, 2}, 1.0);
  Tensor p = Tensor::from_data({1, 2}, {0.3, 0.8}, true);
  const auto loss = edge_loss(tape, {p}, targets, valid);
  tape.backward(loss);
  // d/dp of -(y log p + (1-y) log(1-p)) = (p - y) / (p (1 - p)), scaled by the
  // averaging factor 1 / n_valid.
  const double scale = 1.0 / 2.0;
  const double g0 = (0.3 - 1.0) / (0.3 * 0.7) * scale;
  const double g1 = (0.8 - 0.0) / (0.8 * 0.2) * scale;
  CHECK(p.grad_at(0) == doctest::Approx(g0).epsilon(1e-12));
  CHECK(p.grad_at(1) == doctest::Approx(g1).epsilon(1e-12));
}

TEST_CASE("edge_loss: no valid entries raises a loss error") {
  Tape tape;
  Tensor targets = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor valid = Tensor::zeros({2, 2});
  Tensor p = Tensor::full({2, 2}, 0.5);
  CHECK_THROWS_AS(edge_loss(tape, {p}, targets, valid), Error);
  CHECK_THROWS_AS(edge_loss(tape, {}, targets, valid), Error);
}

TEST_CASE("edge_loss: extreme predictions are clamped before the log") {
  Tape tape;
  Tensor targets = Tensor::from_data({1, 2}, {1, 0});
  Tensor valid = Tensor::full({1, 2}, 1.0);
  Tensor p = Tensor::from_data({1, 2}, {0.0, 1.0});  // would be log(0) unclamped
  const auto loss = edge_loss(tape, {p}, targets, valid);
  CHECK(std::isfinite(loss.value()));
  CHECK(loss.value() == doctest::Approx(-std::log(kProbClamp)).epsilon(1e-6));
}

TEST_CASE("kl_standard_normal: q = N(0,1) gives exactly zero") {
  Tape tape;
  PosteriorParams post{Tensor::zeros({2}), Tensor::full({2}, 1.0)};
  CHECK(kl_standard_normal(tape, post).value() == 0.0);
}

TEST_CASE("kl_standard_normal: scalar q = N(1,1) gives 0.5") {
  Tape tape;
  PosteriorParams post{Tensor::from_data({1}, {1.0}), Tensor::from_data({1}, {1.0})};
  CHECK(kl_standard_normal(tape, post).value() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("bayes_loss: perfect predictions with a standard-normal posterior vanish") {
  Tape tape;
  PosteriorParams post{Tensor::zeros({2}), Tensor::full({2}, 1.0)};
  // Log-likelihood of perfect (clamped) predictions is ~ -1e-7 per edge.
  Tensor loglik = Tensor::scalar(-1e-7);
  const auto lb = bayes_loss(tape, post, {loglik});
  CHECK(std::abs(lb.value()) < 1e-5);
}

TEST_CASE("bayes_loss: averages the loglik samples") {
  Tape tape;
  PosteriorParams post{Tensor::zeros({1}), Tensor::full({1}, 1.0)};
  Tensor a = Tensor::scalar(-1.0), b = Tensor::scalar(-3.0);
  const auto lb = bayes_loss(tape, post, {a, b});
  CHECK(lb.value() == doctest::Approx(2.0).epsilon(1e-12));  // -mean(-1, -3) + 0
}

TEST_CASE("adam: zero gradient and zero decay leave parameters unchanged") {
  Tensor p = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
  p.zero_grad();
  Adam opt({p});
  opt.step(1e-3, 0.0);
  CHECK(p[0] == 1.0);
  CHECK(p[1] == -2.0);
  CHECK(p[2] == 0.5);
}

TEST_CASE("adam: first step with constant gradient moves by about the learning rate") {
  Tensor p = Tensor::from_data({2}, {0.0, 0.0}, true);
  Tape tape;
  Tensor g = Tensor::from_data({2}, {0.7, -1.3});
  Tensor loss = sum(tape, mul(tape, p, g));
  tape.backward(loss);
  Adam opt({p});
  const double eta = 1e-3;
  opt.step(eta, 0.0);
  // Bias-corrected first step is eta * g / (|g| + eps) ~ eta * sign(g).
  CHECK(std::abs(p[0] + eta) < 1e-6 * eta);
  CHECK(std::abs(p[1] - eta) < 1e-6 * eta);
}

TEST_CASE("adam: decoupled weight decay shrinks multiplicatively under zero gradients") {
  Tensor p = Tensor::from_data({2}, {2.0, -4.0}, true);
  p.zero_grad();
  Adam opt({p});
  const double eta = 0.1, wd = 0.5;
  opt.step(eta, wd);
  CHECK(p[0] == doctest::Approx(2.0 * (1.0 - eta * wd)).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(-4.0 * (1.0 - eta * wd)).epsilon(1e-12));
}

TEST_CASE("adam: non-finite gradient rejects the step before any mutation") {
  Tensor p = Tensor::from_data({2}, {1.0, 2.0}, true);
  p.zero_grad();
  Tensor q = Tensor::from_data({1}, {3.0}, true);
  q.zero_grad();
  const_cast<std::vector<double>&>(*(&q.node()->grad))[0] = std::nan("");
  Adam opt({p, q});
  CHECK_THROWS_AS(opt.step(1e-3, 0.1), Error);
  CHECK(p[0] == 1.0);  // untouched
  CHECK(q[0] == 3.0);
  CHECK(opt.step_count() == 0);
}

TEST_CASE("adam: absent gradient buffers count as zero") {
  Tensor p = Tensor::from_data({2}, {1.0, -1.0}, true);  // grad never ensured
  Adam opt({p});
  opt.step(0.1, 0.5);
  CHECK(p[0] == doctest::Approx(1.0 * 0.95).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(-0.95).epsilon(1e-12));
}
