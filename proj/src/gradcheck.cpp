#include "bgnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "bgnn/error.hpp"

namespace bgnn {
namespace {

double eval_scalar(const std::function<Tensor(Tape&)>& f) {
  Tape tape;
  Tensor out = f(tape);
  if (out.size() != 1) throw Error::dimension("grad_check: f must return a scalar");
  const double v = out.value();
  if (!std::isfinite(v)) throw Error::eval("grad_check: f returned a non-finite value");
  return v;
}

}  // namespace

std::string GradCheckReport::summary() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "gradcheck %s: max_rel_error=%.6e (param %zu entry %lld: analytic=%.9e "
                "numeric=%.9e) over %lld entries, tol=%.1e",
                pass ? "PASS" : "FAIL", max_rel_error, worst.param,
                static_cast<long long>(worst.entry), worst.analytic, worst.numeric,
                static_cast<long long>(entries_checked), tol);
  return buf;
}

GradCheckReport grad_check(const std::function<Tensor(Tape&)>& f, std::span<const Tensor> params,
                           double eps, double tol) {
  if (eps <= 0.0) throw Error::config("grad_check: eps must be positive");

  for (const Tensor& p : params) const_cast<Tensor&>(p).zero_grad();

  // Analytic pass.
  {
    Tape tape;
    Tensor out = f(tape);
    if (out.size() != 1) throw Error::dimension("grad_check: f must return a scalar");
    if (!std::isfinite(out.value())) throw Error::eval("grad_check: f returned a non-finite value");
    tape.backward(out);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const Tensor& p : params) {
    std::vector<double> g(static_cast<std::size_t>(p.size()), 0.0);
    for (std::int64_t i = 0; i < p.size(); ++i) g[i] = p.grad_at(i);
    analytic.push_back(std::move(g));
  }

  GradCheckReport report;
  report.tol = tol;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    auto pd = p.mutable_data();
    for (std::int64_t i = 0; i < p.size(); ++i) {
      const double orig = pd[i];
      pd[i] = orig + eps;
      const double fp = eval_scalar(f);
      pd[i] = orig - eps;
      const double fm = eval_scalar(f);
      pd[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      const double rel = std::abs(a - numeric) / denom;
      if (rel >= report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = {pi, i, a, numeric};
      }
      ++report.entries_checked;
    }
  }
  report.pass = report.max_rel_error < tol;
  return report;
}

}  // namespace bgnn
