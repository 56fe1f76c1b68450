#pragma once

#include <vector>

#include "bgnn/model.hpp"
#include "bgnn/tensor.hpp"

namespace bgnn::train {

// Predictions are clamped to [1e-7, 1 - 1e-7] before the logs.
inline constexpr double kProbClamp = 1e-7;

// Binary cross-entropy of the valid query edges, averaged over valid entries
// and layers. Raises a loss error when no entry is valid.
Tensor edge_loss(Tape& tape, const std::vector<Tensor>& p_layers, const Tensor& targets,
                 const Tensor& valid_mask);

// Closed-form KL(q || N(0, I)) for the diagonal Gaussian posterior:
// 0.5 * sum(mu^2 + sigma2 - log sigma2 - 1).
Tensor kl_standard_normal(Tape& tape, const model::PosteriorParams& post);

// L_B = -(1/S) sum_s loglik_s + KL(q || N(0, I)). Each loglik sample is a
// scalar log-likelihood of the valid query edges under one posterior draw.
Tensor bayes_loss(Tape& tape, const model::PosteriorParams& post,
                  const std::vector<Tensor>& loglik_samples);

}  // namespace bgnn::train
