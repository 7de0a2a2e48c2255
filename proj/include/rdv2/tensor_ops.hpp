#pragma once

// Plain (non-recording) tensor math. The autograd layer uses these for its
// forward values; tests and priors call them directly.

#include <cstddef>
#include <functional>
#include <vector>

#include "rdv2/kernels.hpp"
#include "rdv2/tensor.hpp"

namespace rdv2::ops {

Tensor map(const Tensor& x, const std::function<double(double)>& f);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor pow(const Tensor& x, double p);
Tensor sqrt(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor clip(const Tensor& x, double lo, double hi);

double sum(const Tensor& x);
double mean(const Tensor& x);
double min(const Tensor& x);
double max(const Tensor& x);
/// Reductions over one axis; the axis is removed (a rank-1 input yields shape [1]).
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);
Tensor min(const Tensor& x, std::size_t axis);

double max_abs_diff(const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Output geometry for conv2d; throws ConfigError for bad group counts and
/// DimensionError for mismatched weights.
kernels::ConvGeometry conv_geometry(const Shape& input, const Shape& weight, std::size_t stride,
                                    std::size_t padding, std::size_t groups);

/// Cross-correlation over input [C_in x H x W] with weight [C_out x C_in/g x kh x kw].
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor* bias = nullptr,
              std::size_t stride = 1, std::size_t padding = 0, std::size_t groups = 1);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

/// Average pooling of [C x H x W] by `factor` with ceil-sized output; edge
/// windows average only the pixels they cover.
Tensor avg_pool(const Tensor& x, std::size_t factor);
/// Half-pixel-centred bilinear resize of [C x H x W].
Tensor upsample_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);

Tensor concat0(const std::vector<const Tensor*>& parts);
Tensor slice0(const Tensor& x, std::size_t begin, std::size_t count);

/// Reflect-pads [C x H x W] at the bottom/right edge (no edge repeat).
Tensor reflect_pad(const Tensor& x, std::size_t pad_h, std::size_t pad_w);
Tensor crop(const Tensor& x, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);

}  // namespace rdv2::ops

namespace rdv2::ops::detail {

struct LerpTap {
    std::size_t i0 = 0, i1 = 0;
    double w1 = 0.0;  // weight of i1; i0 gets 1 - w1
};

/// Source taps for resizing an axis of length in_len to out_len.
std::vector<LerpTap> bilinear_taps(std::size_t in_len, std::size_t out_len);

/// Reflection of index i into [0, n) without repeating the edge sample.
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n);

}  // namespace rdv2::ops::detail
