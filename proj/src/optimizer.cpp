#include "bgnn/optimizer.hpp"

#include <cmath>
#include <string>

#include "bgnn/error.hpp"

namespace bgnn::train {

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
  }
}

void Adam::step(double lr, double weight_decay) {
  // Validate every gradient before touching any parameter.
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    const auto g = params_[pi].grad();
    for (double gv : g) {
      if (!std::isfinite(gv)) {
        throw Error::numeric("adam: non-finite gradient in parameter " + std::to_string(pi) +
                             ", step rejected");
      }
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    auto data = params_[pi].mutable_data();
    const auto g = params_[pi].grad();
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double gi = i < g.size() ? g[i] : 0.0;  // absent grad buffer == zero gradient
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      if (weight_decay != 0.0) data[i] -= lr * weight_decay * data[i];
      data[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace bgnn::train
