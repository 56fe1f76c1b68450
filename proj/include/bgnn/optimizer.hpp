#pragma once

#include <vector>

#include "bgnn/tensor.hpp"

namespace bgnn::train {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction and decoupled weight decay
// (p <- p - lr * wd * p, applied independently of the moment update).
// A step with any non-finite gradient is rejected before any parameter moves.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamConfig cfg = {});

  void step(double lr, double weight_decay);
  void zero_grad();
  int step_count() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamConfig cfg_;
  int t_ = 0;
};

}  // namespace bgnn::train
