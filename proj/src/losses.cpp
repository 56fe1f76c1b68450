#include "bgnn/losses.hpp"

#include "bgnn/error.hpp"
#include "bgnn/ops.hpp"

namespace bgnn::train {

Tensor edge_loss(Tape& tape, const std::vector<Tensor>& p_layers, const Tensor& targets,
                 const Tensor& valid_mask) {
  if (p_layers.empty()) throw Error::loss("edge_loss: no prediction layers");
  double n_valid = 0.0;
  for (double v : valid_mask.data()) n_valid += v;
  if (n_valid <= 0.0) throw Error::loss("edge_loss: no valid query edges");

  Tensor total;
  for (const Tensor& p : p_layers) {
    Tensor pc = clamp(tape, p, kProbClamp, 1.0 - kProbClamp);
    Tensor pos = mul(tape, targets, log(tape, pc));
    Tensor one_minus_t = add_scalar(tape, mul_scalar(tape, targets, -1.0), 1.0);
    Tensor one_minus_p = add_scalar(tape, mul_scalar(tape, pc, -1.0), 1.0);
    Tensor neg = mul(tape, one_minus_t, log(tape, one_minus_p));
    Tensor ll = mul(tape, add(tape, pos, neg), valid_mask);
    Tensor layer_sum = sum(tape, ll);
    total = total.defined() ? add(tape, total, layer_sum) : layer_sum;
  }
  const double scale = -1.0 / (n_valid * static_cast<double>(p_layers.size()));
  return mul_scalar(tape, total, scale);
}

Tensor kl_standard_normal(Tape& tape, const model::PosteriorParams& post) {
  Tensor mu2 = mul(tape, post.mu, post.mu);
  Tensor terms = add(tape, mu2, post.sigma2);
  terms = sub(tape, terms, log(tape, post.sigma2));
  terms = add_scalar(tape, terms, -1.0);
  return mul_scalar(tape, sum(tape, terms), 0.5);
}

Tensor bayes_loss(Tape& tape, const model::PosteriorParams& post,
                  const std::vector<Tensor>& loglik_samples) {
  if (loglik_samples.empty()) throw Error::loss("bayes_loss: need at least one sample");
  Tensor acc = loglik_samples[0];
  for (std::size_t s = 1; s < loglik_samples.size(); ++s) {
    acc = add(tape, acc, loglik_samples[s]);
  }
  Tensor neg_expected = mul_scalar(tape, acc, -1.0 / static_cast<double>(loglik_samples.size()));
  return add(tape, neg_expected, kl_standard_normal(tape, post));
}

}  // namespace bgnn::train
