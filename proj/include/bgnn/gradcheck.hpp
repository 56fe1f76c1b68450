#pragma once

#include <functional>
#include <span>
#include <string>

#include "bgnn/tensor.hpp"

namespace bgnn {

struct GradCheckWorst {
  std::size_t param = 0;
  std::int64_t entry = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  GradCheckWorst worst;
  std::int64_t entries_checked = 0;
  double tol = 0.0;
  bool pass = false;

  std::string summary() const;
};

// Compares the analytic gradient of a scalar function against central finite
// differences (f(p+eps) - f(p-eps)) / (2 eps), entry by entry over every
// parameter. f must be deterministic across calls (rebuild any RngStream from
// a fixed seed inside f). The per-entry error is
//   |analytic - numeric| / max(1, |analytic|, |numeric|)
// i.e. absolute error for gradients below 1 in magnitude, relative above.
// Throws eval errors if f produces a non-finite value.
GradCheckReport grad_check(const std::function<Tensor(Tape&)>& f, std::span<const Tensor> params,
                           double eps, double tol);

}  // namespace bgnn
