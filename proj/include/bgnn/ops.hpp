#pragma once

#include "bgnn/rng.hpp"
#include "bgnn/tensor.hpp"

namespace bgnn {

// Reverse-mode primitives. Every op computes its output eagerly and, when the
// result requires gradients, records one backward step on the tape. Inputs
// that do not require gradients receive nothing on backward, so constants
// (masks, targets) are ordinary tensors with requires_grad=false.

// y = a @ b for a:[n,k], b:[k,m].
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

// y = x @ w + b (b broadcast over rows) for x:[n,k], w:[k,m], b:[m].
Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b);

// Same-shape elementwise arithmetic.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);

// Arithmetic with a plain double constant.
Tensor add_scalar(Tape& tape, const Tensor& x, double c);
Tensor mul_scalar(Tape& tape, const Tensor& x, double c);

// Broadcast a one-element tensor over x; gradients flow into both arguments.
Tensor scalar_mul(Tape& tape, const Tensor& s, const Tensor& x);  // s * x
Tensor scalar_add(Tape& tape, const Tensor& s, const Tensor& x);  // x + s

// One entry by flat index, as a [1] tensor.
Tensor select(Tape& tape, const Tensor& x, std::int64_t index);

// Column-wise concatenation of a:[n,p] and b:[n,q] into [n,p+q].
Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b);

Tensor transpose(Tape& tape, const Tensor& x);
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

Tensor row_sum(Tape& tape, const Tensor& x);   // [n,m] -> [n,1]
Tensor col_mean(Tape& tape, const Tensor& x);  // [n,m] -> [1,m]
Tensor sum(Tape& tape, const Tensor& x);       // -> [1]
Tensor mean(Tape& tape, const Tensor& x);      // -> [1]

// Clamp to [lo, hi]; gradient is identity strictly inside, zero outside.
Tensor clamp(Tape& tape, const Tensor& x, double lo, double hi);

enum class EwOp { sigmoid, tanh, leaky_relu, exp, log, softplus, rsqrt };

// Elementwise map with its analytic derivative. slope is the negative-side
// slope of leaky_relu and is ignored by the other ops. log and rsqrt require
// strictly positive entries.
Tensor elementwise(Tape& tape, EwOp op, const Tensor& x, double slope = 0.01);

inline Tensor sigmoid(Tape& t, const Tensor& x) { return elementwise(t, EwOp::sigmoid, x); }
inline Tensor tanh(Tape& t, const Tensor& x) { return elementwise(t, EwOp::tanh, x); }
inline Tensor leaky_relu(Tape& t, const Tensor& x, double slope) {
  return elementwise(t, EwOp::leaky_relu, x, slope);
}
inline Tensor exp(Tape& t, const Tensor& x) { return elementwise(t, EwOp::exp, x); }
inline Tensor log(Tape& t, const Tensor& x) { return elementwise(t, EwOp::log, x); }
inline Tensor softplus(Tape& t, const Tensor& x) { return elementwise(t, EwOp::softplus, x); }
inline Tensor rsqrt(Tape& t, const Tensor& x) { return elementwise(t, EwOp::rsqrt, x); }

// Inverted dropout: in training mode zeroes each entry with probability rate
// and scales survivors by 1/(1-rate); in eval mode it is the identity.
// rate must lie in [0, 1).
Tensor dropout(Tape& tape, const Tensor& x, double rate, bool train, RngStream& rng);

// Reparameterized draw mu + sqrt(sigma2) * eps with eps ~ N(0,1) frozen at
// record time; differentiable w.r.t. mu and sigma2. sigma2 entries must be
// >= 0; at exactly zero the sigma2 derivative is taken as 0.
Tensor gaussian_sample(Tape& tape, const Tensor& mu, const Tensor& sigma2, RngStream& rng);

// All-pairs elementwise absolute difference: h:[v,d] -> [v*v,d] with row
// i*v+j holding |h_i - h_j|.
Tensor pairwise_absdiff(Tape& tape, const Tensor& h);

// Row-wise layer normalization with learned gain and bias (both [d]).
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

}  // namespace bgnn
