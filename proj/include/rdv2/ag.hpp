#pragma once

// Differentiable operations on tape variables. Each op computes its value with
// the plain tensor routines and records an exact backward rule.

#include <cstddef>
#include <vector>

#include "rdv2/autograd.hpp"

namespace rdv2::ag {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var add_scalar(Var a, double s);
Var mul_scalar(Var a, double s);
Var neg(Var a);
Var square(Var a);
Var exp(Var a);
Var log(Var a);
Var pow(Var a, double p);
Var sqrt(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var silu(Var a);
Var abs(Var a);
/// Zero gradient outside [lo, hi].
Var clip(Var a, double lo, double hi);
Var sin(Var a);
Var cos(Var a);
/// Elementwise atan2(y, x); gradient is zero where x = y = 0.
Var atan2(Var y, Var x);
/// Elementwise sqrt(x^2 + y^2); gradient is zero where both vanish.
Var hypot(Var x, Var y);

/// Scalar-variable broadcasts; `s` must hold exactly one element.
Var add_sv(Var a, Var s);
Var mul_sv(Var a, Var s);
Var div_sv(Var a, Var s);
/// Multiplies each leading-axis slice of a by the matching entry of s ([C]).
Var scale_channels(Var a, Var s);

/// Element i of a flattened tensor, as a one-element variable.
Var element(Var a, std::size_t i);
/// Replaces values with |v| < floor by sign(v)*floor (sign(0) = +1); gradient zero there.
Var magnitude_floor(Var a, double floor);

Var sum(Var a);
Var mean(Var a);
Var sum(Var a, std::size_t axis);
Var mean(Var a, std::size_t axis);
/// Minimum along an axis; the gradient goes to the first minimal element.
Var min(Var a, std::size_t axis);
/// Percentile p in [0, 100] with linear interpolation between order statistics.
Var percentile(Var a, double p);

Var reshape(Var a, Shape shape);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var softmax(Var a, std::size_t axis);

/// bias may be a default-constructed Var (tape == nullptr) for no bias.
Var conv2d(Var x, Var w, Var bias, std::size_t stride = 1, std::size_t padding = 0, std::size_t groups = 1);
Var avg_pool(Var x, std::size_t factor);
Var upsample_bilinear(Var x, std::size_t out_h, std::size_t out_w);

Var concat0(const std::vector<Var>& parts);
Var slice0(Var x, std::size_t begin, std::size_t count);
/// Square [d x d] blocks placed along the diagonal of a zero [nd x nd] matrix.
Var block_diag(const std::vector<Var>& blocks);
/// Tiles the leading axis `times` times: [c0..cK-1, c0..cK-1, ...].
Var repeat0(Var x, std::size_t times);

/// Per-channel first-order recurrence over the trailing axis of x [C x N]:
/// h_t = a*h_{t-1} + (1-a)*x_t with a = sigmoid(lambda[c]) and h_{-1} = 0.
Var linear_scan(Var x, Var lambda);

/// Complex tensors are packed as [2, ...] with real part first.
Var fft2(Var x);
Var ifft2(Var z);

}  // namespace rdv2::ag
