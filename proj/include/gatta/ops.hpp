#pragma once

// Differentiable operations on tape variables. Image tensors are NHWC.

#include <span>

#include "gatta/rng.hpp"
#include "gatta/tape.hpp"

namespace gatta {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, real factor);
Var add_scalar(Var a, real value);
Var sum(Var a);
Var mean(Var a);
Var sum_squares(Var a);
Var reshape(Var a, Shape shape);

Var relu(Var x);

/// x[m,k] * w[k,n]
Var matmul(Var x, Var w);
/// x[..., n] + bias[n]
Var add_bias(Var x, Var bias);
/// x[m,k] * w[k,n] + bias[n]
Var dense(Var x, Var w, Var bias);

/// 3x3 stride-1 same-padded cross-correlation: x[b,h,w,ci], kernel[3,3,ci,co], bias[co].
Var conv2d(Var x, Var kernel, Var bias);
/// Non-overlapping 2x2 max; gradient goes to the first maximum in row-major window order.
Var maxpool2x2(Var x);

/// Inverted dropout. Identity (returns `x`) when `training` is false or rate is 0.
Var dropout(Var x, real rate, bool training, Rng& rng);

/// x * (1 + g), with g broadcast over the trailing x.numel()/g.numel() values of
/// each row. With `clamp`, the factor is max(0, 1 + g).
Var scale_add(Var x, Var g, bool clamp = false);
/// x * s for a one-element s.
Var mul_scalar(Var x, Var s);

/// out[b,c,m] = a[b,c] * w[c,m] + bias[m]
Var row_outer(Var a, Var w, Var bias);
/// x[b,p,d] -> mean over p -> [b,d]
Var mean_axis1(Var x);
/// out[b,p] = sum_m keys[b,p,m] * q[b,m]
Var batched_dot(Var keys, Var q);

/// Mean over the batch of -log softmax(logits)[label]; row max is subtracted first.
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

/// Row-wise softmax of a [b,n] tensor (not recorded).
Tensor softmax(const Tensor& logits);

}  // namespace gatta
