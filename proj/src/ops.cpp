#include "bgnn/ops.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "bgnn/error.hpp"

namespace bgnn {
namespace {

void require_2d(const Tensor& t, const char* op) {
  if (t.shape().size() != 2) {
    throw Error::dimension(std::string(op) + ": expected 2-d tensor, got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error::dimension(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                           " vs " + shape_str(b.shape()));
  }
}

bool any_grad(const Tensor& a) { return a.requires_grad(); }
bool any_grad(const Tensor& a, const Tensor& b) { return a.requires_grad() || b.requires_grad(); }
bool any_grad(const Tensor& a, const Tensor& b, const Tensor& c) {
  return a.requires_grad() || b.requires_grad() || c.requires_grad();
}

}  // namespace

// ---------------------------------------------------------------------------
// matrix ops
// ---------------------------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const int n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw Error::dimension("matmul: inner dimensions " + shape_str(a.shape()) + " x " +
                           shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(n) * m, 0.0);
  const auto ad = a.data(), bd = b.data();
  for (int i = 0; i < n; ++i) {
    for (int p = 0; p < k; ++p) {
      const double av = ad[static_cast<std::size_t>(i) * k + p];
      for (int j = 0; j < m; ++j) {
        out[static_cast<std::size_t>(i) * m + j] += av * bd[static_cast<std::size_t>(p) * m + j];
      }
    }
  }
  Tensor y = Tensor::from_data({n, m}, std::move(out), any_grad(a, b));
  if (y.requires_grad()) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    tape.record([an, bn, yn, n, k, m] {
      if (yn->grad.empty()) return;
      const auto& gy = yn->grad;
      if (an->requires_grad) {
        an->ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int p = 0; p < k; ++p) {
            double acc = 0.0;
            for (int j = 0; j < m; ++j)
              acc += gy[static_cast<std::size_t>(i) * m + j] *
                     bn->data[static_cast<std::size_t>(p) * m + j];
            an->grad[static_cast<std::size_t>(i) * k + p] += acc;
          }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int p = 0; p < k; ++p)
          for (int j = 0; j < m; ++j) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i)
              acc += an->data[static_cast<std::size_t>(i) * k + p] *
                     gy[static_cast<std::size_t>(i) * m + j];
            bn->grad[static_cast<std::size_t>(p) * m + j] += acc;
          }
      }
    });
  }
  return y;
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  require_2d(x, "linear");
  require_2d(w, "linear");
  const int n = x.rows(), k = x.cols(), m = w.cols();
  if (w.rows() != k) {
    throw Error::dimension("linear: x " + shape_str(x.shape()) + " does not conform with w " +
                           shape_str(w.shape()));
  }
  if (b.shape() != Shape{m}) {
    throw Error::dimension("linear: bias " + shape_str(b.shape()) + " must be [" +
                           std::to_string(m) + "]");
  }
  std::vector<double> out(static_cast<std::size_t>(n) * m);
  const auto xd = x.data(), wd = w.data(), bd = b.data();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) out[static_cast<std::size_t>(i) * m + j] = bd[j];
    for (int p = 0; p < k; ++p) {
      const double xv = xd[static_cast<std::size_t>(i) * k + p];
      for (int j = 0; j < m; ++j)
        out[static_cast<std::size_t>(i) * m + j] += xv * wd[static_cast<std::size_t>(p) * m + j];
    }
  }
  Tensor y = Tensor::from_data({n, m}, std::move(out), any_grad(x, w, b));
  if (y.requires_grad()) {
    auto xn = x.node(), wn = w.node(), bn = b.node(), yn = y.node();
    tape.record([xn, wn, bn, yn, n, k, m] {
      if (yn->grad.empty()) return;
      const auto& gy = yn->grad;
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int p = 0; p < k; ++p) {
            double acc = 0.0;
            for (int j = 0; j < m; ++j)
              acc += gy[static_cast<std::size_t>(i) * m + j] *
                     wn->data[static_cast<std::size_t>(p) * m + j];
            xn->grad[static_cast<std::size_t>(i) * k + p] += acc;
          }
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        for (int p = 0; p < k; ++p)
          for (int j = 0; j < m; ++j) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i)
              acc += xn->data[static_cast<std::size_t>(i) * k + p] *
                     gy[static_cast<std::size_t>(i) * m + j];
            wn->grad[static_cast<std::size_t>(p) * m + j] += acc;
          }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int j = 0; j < m; ++j) {
          double acc = 0.0;
          for (int i = 0; i < n; ++i) acc += gy[static_cast<std::size_t>(i) * m + j];
          bn->grad[j] += acc;
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// elementwise arithmetic
// ---------------------------------------------------------------------------

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] += b[i];
  Tensor y = Tensor::from_data(a.shape(), std::move(out), any_grad(a, b));
  if (y.requires_grad()) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    tape.record([an, bn, yn] {
      if (yn->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < yn->grad.size(); ++i) an->grad[i] += yn->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < yn->grad.size(); ++i) bn->grad[i] += yn->grad[i];
      }
    });
  }
  return y;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] -= b[i];
  Tensor y = Tensor::from_data(a.shape(), std::move(out), any_grad(a, b));
  if (y.requires_grad()) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    tape.record([an, bn, yn] {
      if (yn->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < yn->grad.size(); ++i) an->grad[i] += yn->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < yn->grad.size(); ++i) bn->grad[i] -= yn->grad[i];
      }
    });
  }
  return y;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] *= b[i];
  Tensor y = Tensor::from_data(a.shape(), std::move(out), any_grad(a, b));
  if (y.requires_grad()) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    tape.record([an, bn, yn] {
      if (yn->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < yn->grad.size(); ++i) an->grad[i] += yn->grad[i] * bn->data[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < yn->grad.size(); ++i) bn->grad[i] += yn->grad[i] * an->data[i];
      }
    });
  }
  return y;
}

Tensor add_scalar(Tape& tape, const Tensor& x, double c) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v += c;
  Tensor y = Tensor::from_data(x.shape(), std::move(out), any_grad(x));
  if (y.requires_grad()) {
    auto xn = x.node(), yn = y.node();
    tape.record([xn, yn] {
      if (yn->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < yn->grad.size(); ++i) xn->grad[i] += yn->grad[i];
    });
  }
  return y;
}

Tensor mul_scalar(Tape& tape, const Tensor& x, double c) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= c;
  Tensor y = Tensor::from_data(x.shape(), std::move(out), any_grad(x));
  if (y.requires_grad()) {
    auto xn = x.node(), yn = y.node();
    tape.record([xn, yn, c] {
      if (yn->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < yn->grad.size(); ++i) xn->grad[i] += c * yn->grad[i];
    });
  }
  return y;
}

Tensor scalar_mul(Tape& tape, const Tensor& s, const Tensor& x) {
  if (s.size() != 1) throw Error::dimension("scalar_mul: s must have one entry");
  const double sv = s[0];
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= sv;
  Tensor y = Tensor::from_data(x.shape(), std::move(out), any_grad(s, x));
  if (y.requires_grad()) {
    auto sn = s.node(), xn = x.node(), yn = y.node();
    tape.record([sn, xn, yn] {
      if (yn->grad.empty()) return;
      if (sn->requires_grad) {
        sn->ensure_grad();
        double acc = 0.0;
        for (std::size_t i = 0; i < yn->grad.size(); ++i) acc += yn->grad[i] * xn->data[i];
        sn->grad[0] += acc;
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        const double sv2 = sn->data[0];
        for (std::size_t i = 0; i < yn->grad.size(); ++i) xn->grad[i] += sv2 * yn->grad[i];
      }
    });
  }
  return y;
}

Tensor scalar_add(Tape& tape, const Tensor& s, const Tensor& x) {
  if (s.size() != 1) throw Error::dimension("scalar_add: s must have one entry");
  const double sv = s[0];
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v += sv;
  Tensor y = Tensor::from_data(x.shape(), std::move(out), any_grad(s, x));
  if (y.requires_grad()) {
    auto sn = s.node(), xn = x.node(), yn = y.node();
    tape.record([sn, xn, yn] {
      if (yn->grad.empty()) return;
      if (sn->requires_grad) {
        sn->ensure_grad();
        double acc = 0.0;
        for (double g : yn->grad) acc += g;
        sn->grad[0] += acc;
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < yn->grad.size(); ++i) xn->grad[i] += yn->grad[i];
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// structural ops
// ---------------------------------------------------------------------------

Tensor select(Tape& tape, const Tensor& x, std::int64_t index) {
  if (index < 0 || index >= x.size()) {
    throw Error::dimension("select: index " + std::to_string(index) + " out of range for " +
                           shape_str(x.shape()));
  }
  Tensor y = Tensor::from_data({1}, {x[index]}, any_grad(x));
  if (y.requires_grad()) {
    auto xn = x.node(), yn = y.node();
    tape.record([xn, yn, index] {
      if (yn->grad.empty()) return;
      xn->ensure_grad();
      xn->grad[static_cast<std::size_t>(index)] += yn->grad[0];
    });
  }
  return y;
}

Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b) {
  require_2d(a, "concat_cols");
  require_2d(b, "concat_cols");
  if (a.rows() != b.rows()) {
    throw Error::dimension("concat_cols: row mismatch " + shape_str(a.shape()) + " vs " +
                           shape_str(b.shape()));
  }
  const int n = a.rows(), p = a.cols(), q = b.cols();
  std::vector<double> out(static_cast<std::size_t>(n) * (p + q));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j)
      out[static_cast<std::size_t>(i) * (p + q) + j] = a.data()[static_cast<std::size_t>(i) * p + j];
    for (int j = 0; j < q; ++j)
      out[static_cast<std::size_t>(i) * (p + q) + p + j] =
          b.data()[static_cast<std::size_t>(i) * q + j];
  }
  Tensor y = Tensor::from_data({n, p + q}, std::move(out), any_grad(a, b));
  if (y.requires_grad()) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    tape.record([an, bn, yn, n, p, q] {
      if (yn->grad.empty()) return;
      const auto& gy = yn->grad;
      if (an->requires_grad) {
        an->ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < p; ++j)
            an->grad[static_cast<std::size_t>(i) * p + j] +=
                gy[static_cast<std::size_t>(i) * (p + q) + j];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < q; ++j)
            bn->grad[static_cast<std::size_t>(i) * q + j] +=
                gy[static_cast<std::size_t>(i) * (p + q) + p + j];
      }
    });
  }
  return y;
}

Tensor transpose(Tape& tape, const Tensor& x) {
  require_2d(x, "transpose");
  const int n = x.rows(), m = x.cols();
  std::vector<double> out(static_cast<std::size_t>(n) * m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      out[static_cast<std::size_t>(j) * n + i] = x.data()[static_cast<std::size_t>(i) * m + j];
  Tensor y = Tensor::from_data({m, n}, std::move(out), any_grad(x));
  if (y.requires_grad()) {
    auto xn = x.node(), yn = y.node();
    tape.record([xn, yn, n, m] {
      if (yn->grad.empty()) return;
      xn->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
          xn->grad[static_cast<std::size_t>(i) * m + j] += yn->grad[static_cast<std::size_t>(j) * n + i];
    });
  }
  return y;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw Error::dimension("reshape: cannot view " + shape_str(x.shape()) + " as " +
                           shape_str(shape));
  }
  Tensor y = Tensor::from_data(std::move(shape),
                               std::vector<double>(x.data().begin(), x.data().end()), any_grad(x));
  if (y.requires_grad()) {
    auto xn = x.node(), yn = y.node();
    tape.record([xn, yn] {
      if (yn->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < yn->grad.size(); ++i) xn->grad[i] += yn->grad[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Tensor row_sum(Tape& tape, const Tensor& x) {
  require_2d(x, "row_sum");
  const int n = x.rows(), m = x.cols();
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out[i] += x.data()[static_cast<std::size_t>(i) * m + j];
  Tensor y = Tensor::from_data({n, 1}, std::move(out), any_grad(x));
  if (y.requires_grad()) {
    auto xn = x.node(), yn = y.node();
    tape.record([xn, yn, n, m] {
      if (yn->grad.empty()) return;
      xn->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) xn->grad[static_cast<std::size_t>(i) * m + j] += yn->grad[i];
    });
  }
  return y;
}

Tensor col_mean(Tape& tape, const Tensor& x) {
  require_2d(x, "col_mean");
  const int n = x.rows(), m = x.cols();
  std::vector<double> out(static_cast<std::size_t>(m), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out[j] += x.data()[static_cast<std::size_t>(i) * m + j];
  for (auto& v : out) v /= n;
  Tensor y = Tensor::from_data({1, m}, std::move(out), any_grad(x));
  if (y.requires_grad()) {
    auto xn = x.node(), yn = y.node();
    tape.record([xn, yn, n, m] {
      if (yn->grad.empty()) return;
      xn->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
          xn->grad[static_cast<std::size_t>(i) * m + j] += yn->grad[j] / n;
    });
  }
  return y;
}

Tensor sum(Tape& tape, const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor y = Tensor::from_data({1}, {acc}, any_grad(x));
  if (y.requires_grad()) {
    auto xn = x.node(), yn = y.node();
    tape.record([xn, yn] {
      if (yn->grad.empty()) return;
      xn->ensure_grad();
      for (auto& g : xn->grad) g += yn->grad[0];
    });
  }
  return y;
}

Tensor mean(Tape& tape, const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const double n = static_cast<double>(x.size());
  Tensor y = Tensor::from_data({1}, {acc / n}, any_grad(x));
  if (y.requires_grad()) {
    auto xn = x.node(), yn = y.node();
    tape.record([xn, yn, n] {
      if (yn->grad.empty()) return;
      xn->ensure_grad();
      for (auto& g : xn->grad) g += yn->grad[0] / n;
    });
  }
  return y;
}

Tensor clamp(Tape& tape, const Tensor& x, double lo, double hi) {
  if (!(lo < hi)) throw Error::config("clamp: lo must be < hi");
  std::vector<double> out(x.data().begin(), x.data().end());
  std::vector<double> pass(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    pass[i] = (out[i] > lo && out[i] < hi) ? 1.0 : 0.0;
    if (out[i] < lo) out[i] = lo;
    if (out[i] > hi) out[i] = hi;
  }
  Tensor y = Tensor::from_data(x.shape(), std::move(out), any_grad(x));
  if (y.requires_grad()) {
    auto xn = x.node(), yn = y.node();
    tape.record([xn, yn, pass = std::move(pass)] {
      if (yn->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < yn->grad.size(); ++i) xn->grad[i] += pass[i] * yn->grad[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// elementwise nonlinearities
// ---------------------------------------------------------------------------

Tensor elementwise(Tape& tape, EwOp op, const Tensor& x, double slope) {
  std::vector<double> out(x.size());
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    switch (op) {
      case EwOp::sigmoid: out[i] = 1.0 / (1.0 + std::exp(-v)); break;
      case EwOp::tanh: out[i] = std::tanh(v); break;
      case EwOp::leaky_relu: out[i] = v >= 0.0 ? v : slope * v; break;
      case EwOp::exp: out[i] = std::exp(v); break;
      case EwOp::log:
        if (v <= 0.0) {
          throw Error::domain("log: non-positive entry at index " + std::to_string(i));
        }
        out[i] = std::log(v);
        break;
      case EwOp::softplus:
        out[i] = (v > 0.0 ? v : 0.0) + std::log1p(std::exp(-std::abs(v)));
        break;
      case EwOp::rsqrt:
        if (v <= 0.0) {
          throw Error::domain("rsqrt: non-positive entry at index " + std::to_string(i));
        }
        out[i] = 1.0 / std::sqrt(v);
        break;
    }
  }
  Tensor y = Tensor::from_data(x.shape(), std::move(out), any_grad(x));
  if (y.requires_grad()) {
    auto xn = x.node(), yn = y.node();
    tape.record([xn, yn, op, slope] {
      if (yn->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < yn->grad.size(); ++i) {
        const double v = xn->data[i];
        const double o = yn->data[i];
        double d = 0.0;
        switch (op) {
          case EwOp::sigmoid: d = o * (1.0 - o); break;
          case EwOp::tanh: d = 1.0 - o * o; break;
          case EwOp::leaky_relu: d = v >= 0.0 ? 1.0 : slope; break;
          case EwOp::exp: d = o; break;
          case EwOp::log: d = 1.0 / v; break;
          case EwOp::softplus: d = 1.0 / (1.0 + std::exp(-v)); break;
          case EwOp::rsqrt: d = -0.5 * o * o * o; break;
        }
        xn->grad[i] += d * yn->grad[i];
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// stochastic ops
// ---------------------------------------------------------------------------

Tensor dropout(Tape& tape, const Tensor& x, double rate, bool train, RngStream& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw Error::config("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!train || rate == 0.0) return x;
  const double scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  std::vector<double> out(x.size());
  for (std::int64_t i = 0; i < x.size(); ++i) {
    mask[i] = rng.uniform() < rate ? 0.0 : scale;
    out[i] = x[i] * mask[i];
  }
  Tensor y = Tensor::from_data(x.shape(), std::move(out), any_grad(x));
  if (y.requires_grad()) {
    auto xn = x.node(), yn = y.node();
    tape.record([xn, yn, mask = std::move(mask)] {
      if (yn->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < yn->grad.size(); ++i) xn->grad[i] += mask[i] * yn->grad[i];
    });
  }
  return y;
}

Tensor gaussian_sample(Tape& tape, const Tensor& mu, const Tensor& sigma2, RngStream& rng) {
  require_same_shape(mu, sigma2, "gaussian_sample");
  for (std::int64_t i = 0; i < sigma2.size(); ++i) {
    if (sigma2[i] < 0.0) {
      throw Error::domain("gaussian_sample: negative variance at index " + std::to_string(i));
    }
  }
  std::vector<double> eps(mu.size());
  std::vector<double> out(mu.size());
  for (std::int64_t i = 0; i < mu.size(); ++i) {
    eps[i] = rng.normal();
    out[i] = mu[i] + std::sqrt(sigma2[i]) * eps[i];
  }
  Tensor y = Tensor::from_data(mu.shape(), std::move(out), any_grad(mu, sigma2));
  if (y.requires_grad()) {
    auto mn = mu.node(), sn = sigma2.node(), yn = y.node();
    tape.record([mn, sn, yn, eps = std::move(eps)] {
      if (yn->grad.empty()) return;
      if (mn->requires_grad) {
        mn->ensure_grad();
        for (std::size_t i = 0; i < yn->grad.size(); ++i) mn->grad[i] += yn->grad[i];
      }
      if (sn->requires_grad) {
        sn->ensure_grad();
        for (std::size_t i = 0; i < yn->grad.size(); ++i) {
          const double s2 = sn->data[i];
          if (s2 > 0.0) sn->grad[i] += yn->grad[i] * eps[i] * 0.5 / std::sqrt(s2);
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// model-specific primitives
// ---------------------------------------------------------------------------

Tensor pairwise_absdiff(Tape& tape, const Tensor& h) {
  require_2d(h, "pairwise_absdiff");
  const int v = h.rows(), d = h.cols();
  std::vector<double> out(static_cast<std::size_t>(v) * v * d);
  std::vector<double> sign(out.size());
  for (int i = 0; i < v; ++i)
    for (int j = 0; j < v; ++j)
      for (int c = 0; c < d; ++c) {
        const double diff = h.data()[static_cast<std::size_t>(i) * d + c] -
                            h.data()[static_cast<std::size_t>(j) * d + c];
        const std::size_t o = (static_cast<std::size_t>(i) * v + j) * d + c;
        out[o] = std::abs(diff);
        sign[o] = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      }
  Tensor y = Tensor::from_data({v * v, d}, std::move(out), any_grad(h));
  if (y.requires_grad()) {
    auto hn = h.node(), yn = y.node();
    tape.record([hn, yn, sign = std::move(sign), v, d] {
      if (yn->grad.empty()) return;
      hn->ensure_grad();
      for (int i = 0; i < v; ++i)
        for (int j = 0; j < v; ++j)
          for (int c = 0; c < d; ++c) {
            const std::size_t o = (static_cast<std::size_t>(i) * v + j) * d + c;
            const double g = sign[o] * yn->grad[o];
            hn->grad[static_cast<std::size_t>(i) * d + c] += g;
            hn->grad[static_cast<std::size_t>(j) * d + c] -= g;
          }
    });
  }
  return y;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  require_2d(x, "layer_norm");
  const int n = x.rows(), d = x.cols();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw Error::dimension("layer_norm: gain/bias must be [" + std::to_string(d) + "]");
  }
  std::vector<double> xhat(static_cast<std::size_t>(n) * d);
  std::vector<double> inv_std(static_cast<std::size_t>(n));
  std::vector<double> out(xhat.size());
  for (int i = 0; i < n; ++i) {
    double mu = 0.0;
    for (int c = 0; c < d; ++c) mu += x.data()[static_cast<std::size_t>(i) * d + c];
    mu /= d;
    double var = 0.0;
    for (int c = 0; c < d; ++c) {
      const double cv = x.data()[static_cast<std::size_t>(i) * d + c] - mu;
      var += cv * cv;
    }
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[i] = inv;
    for (int c = 0; c < d; ++c) {
      const std::size_t o = static_cast<std::size_t>(i) * d + c;
      xhat[o] = (x.data()[o] - mu) * inv;
      out[o] = gain[c] * xhat[o] + bias[c];
    }
  }
  Tensor y = Tensor::from_data(x.shape(), std::move(out), any_grad(x, gain, bias));
  if (y.requires_grad()) {
    auto xn = x.node(), gn = gain.node(), bn = bias.node(), yn = y.node();
    tape.record([xn, gn, bn, yn, xhat = std::move(xhat), inv_std = std::move(inv_std), n, d] {
      if (yn->grad.empty()) return;
      const auto& gy = yn->grad;
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (int i = 0; i < n; ++i) {
          double m1 = 0.0, m2 = 0.0;
          for (int c = 0; c < d; ++c) {
            const std::size_t o = static_cast<std::size_t>(i) * d + c;
            const double dxh = gy[o] * gn->data[c];
            m1 += dxh;
            m2 += dxh * xhat[o];
          }
          m1 /= d;
          m2 /= d;
          for (int c = 0; c < d; ++c) {
            const std::size_t o = static_cast<std::size_t>(i) * d + c;
            const double dxh = gy[o] * gn->data[c];
            xn->grad[o] += inv_std[i] * (dxh - m1 - xhat[o] * m2);
          }
        }
      }
      if (gn->requires_grad) {
        gn->ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int c = 0; c < d; ++c) {
            const std::size_t o = static_cast<std::size_t>(i) * d + c;
            gn->grad[c] += gy[o] * xhat[o];
          }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int c = 0; c < d; ++c) bn->grad[c] += gy[static_cast<std::size_t>(i) * d + c];
      }
    });
  }
  return y;
}

}  // namespace bgnn
