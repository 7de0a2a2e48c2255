#include "rdv2/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rdv2/errors.hpp"

namespace rdv2::ops {

Tensor map(const Tensor& x, const std::function<double(double)>& f) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = f(x[i]);
    return out;
}

namespace {
template <class F>
Tensor zip(const Tensor& a, const Tensor& b, const char* name, F f) {
    require_same_shape(a, b, name);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = f(a[i], b[i]);
    return out;
}

template <class F>
Tensor unary(const Tensor& x, F f) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = f(x[i]);
    return out;
}

// Splits shape around `axis` into (outer, len, inner).
void axis_split(const Shape& s, std::size_t axis, std::size_t& outer, std::size_t& len, std::size_t& inner) {
    if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    outer = 1;
    inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    len = s[axis];
}

Shape drop_axis(const Shape& s, std::size_t axis) {
    Shape out;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (i != axis) out.push_back(s[i]);
    if (out.empty()) out.push_back(1);
    return out;
}

void require_chw(const Tensor& x, const char* op) {
    if (x.ndim() != 3) throw DimensionError(std::string(op) + " expects [C x H x W], got " + shape_str(x.shape()));
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return zip(a, b, "add", [](double p, double q) { return p + q; }); }
Tensor sub(const Tensor& a, const Tensor& b) { return zip(a, b, "sub", [](double p, double q) { return p - q; }); }
Tensor mul(const Tensor& a, const Tensor& b) { return zip(a, b, "mul", [](double p, double q) { return p * q; }); }
Tensor div(const Tensor& a, const Tensor& b) { return zip(a, b, "div", [](double p, double q) { return p / q; }); }
Tensor add_scalar(const Tensor& a, double s) { return unary(a, [s](double v) { return v + s; }); }
Tensor mul_scalar(const Tensor& a, double s) { return unary(a, [s](double v) { return v * s; }); }
Tensor exp(const Tensor& x) { return unary(x, [](double v) { return std::exp(v); }); }
Tensor log(const Tensor& x) { return unary(x, [](double v) { return std::log(v); }); }
Tensor pow(const Tensor& x, double p) { return unary(x, [p](double v) { return std::pow(v, p); }); }
Tensor sqrt(const Tensor& x) { return unary(x, [](double v) { return std::sqrt(v); }); }
Tensor tanh(const Tensor& x) { return unary(x, [](double v) { return std::tanh(v); }); }
Tensor sigmoid(const Tensor& x) {
    return unary(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}
Tensor relu(const Tensor& x) { return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }); }
Tensor silu(const Tensor& x) { return unary(x, [](double v) { return v / (1.0 + std::exp(-v)); }); }
Tensor abs(const Tensor& x) { return unary(x, [](double v) { return std::abs(v); }); }
Tensor clip(const Tensor& x, double lo, double hi) {
    return unary(x, [lo, hi](double v) { return std::clamp(v, lo, hi); });
}

// Neumaier compensated summation.
double sum(const Tensor& x) {
    double s = 0.0, comp = 0.0;
    for (double v : x.data()) {
        const double t = s + v;
        comp += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
        s = t;
    }
    return s + comp;
}
double mean(const Tensor& x) { return sum(x) / static_cast<double>(x.numel()); }
double min(const Tensor& x) { return *std::min_element(x.data().begin(), x.data().end()); }
double max(const Tensor& x) { return *std::max_element(x.data().begin(), x.data().end()); }

Tensor sum(const Tensor& x, std::size_t axis) {
    std::size_t outer, len, inner;
    axis_split(x.shape(), axis, outer, len, inner);
    Tensor out(drop_axis(x.shape(), axis));
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < inner; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < len; ++k) s += x[(o * len + k) * inner + j];
            out[o * inner + j] = s;
        }
    return out;
}

Tensor mean(const Tensor& x, std::size_t axis) {
    Tensor s = sum(x, axis);
    return mul_scalar(s, 1.0 / static_cast<double>(x.dim(axis)));
}

Tensor min(const Tensor& x, std::size_t axis) {
    std::size_t outer, len, inner;
    axis_split(x.shape(), axis, outer, len, inner);
    Tensor out(drop_axis(x.shape(), axis));
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < inner; ++j) {
            double m = x[o * len * inner + j];
            for (std::size_t k = 1; k < len; ++k) m = std::min(m, x[(o * len + k) * inner + j]);
            out[o * inner + j] = m;
        }
    return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c(Shape{m, n});
    if (kernels::use_parallel())
        kernels::parallel::matmul(a.ptr(), b.ptr(), c.ptr(), m, k, n);
    else
        kernels::serial::matmul(a.ptr(), b.ptr(), c.ptr(), m, k, n);
    return c;
}

Tensor transpose(const Tensor& a) {
    if (a.ndim() != 2) throw DimensionError("transpose expects a matrix, got " + shape_str(a.shape()));
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor t(Shape{n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
    return t;
}

kernels::ConvGeometry conv_geometry(const Shape& input, const Shape& weight, std::size_t stride,
                                    std::size_t padding, std::size_t groups) {
    if (input.size() != 3) throw DimensionError("conv2d: input must be [C x H x W], got " + shape_str(input));
    if (weight.size() != 4) throw DimensionError("conv2d: weight must be 4-D, got " + shape_str(weight));
    if (groups == 0 || stride == 0) throw ConfigError("conv2d: groups and stride must be positive");
    if (input[0] % groups != 0 || weight[0] % groups != 0)
        throw ConfigError("conv2d: channels (in " + std::to_string(input[0]) + ", out " + std::to_string(weight[0]) +
                          ") not divisible by groups " + std::to_string(groups));
    if (weight[1] != input[0] / groups)
        throw DimensionError("conv2d: weight " + shape_str(weight) + " does not match input " + shape_str(input) +
                             " with groups " + std::to_string(groups));
    kernels::ConvGeometry g;
    g.in_channels = input[0];
    g.in_h = input[1];
    g.in_w = input[2];
    g.out_channels = weight[0];
    g.kernel_h = weight[2];
    g.kernel_w = weight[3];
    g.stride = stride;
    g.padding = padding;
    g.groups = groups;
    if (g.in_h + 2 * padding < g.kernel_h || g.in_w + 2 * padding < g.kernel_w)
        throw DimensionError("conv2d: kernel " + shape_str(weight) + " larger than padded input " + shape_str(input));
    g.out_h = (g.in_h + 2 * padding - g.kernel_h) / stride + 1;
    g.out_w = (g.in_w + 2 * padding - g.kernel_w) / stride + 1;
    return g;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor* bias, std::size_t stride,
              std::size_t padding, std::size_t groups) {
    const auto g = conv_geometry(input.shape(), weight.shape(), stride, padding, groups);
    if (bias && bias->numel() != g.out_channels)
        throw DimensionError("conv2d: bias " + shape_str(bias->shape()) + " does not match " +
                             std::to_string(g.out_channels) + " output channels");
    Tensor out(Shape{g.out_channels, g.out_h, g.out_w});
    const double* b = bias ? bias->ptr() : nullptr;
    if (kernels::use_parallel())
        kernels::parallel::conv2d_forward(input.ptr(), weight.ptr(), b, out.ptr(), g);
    else
        kernels::serial::conv2d_forward(input.ptr(), weight.ptr(), b, out.ptr(), g);
    return out;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    std::size_t outer, len, inner;
    axis_split(x.shape(), axis, outer, len, inner);
    Tensor out(x.shape());
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < inner; ++j) {
            const std::size_t base = o * len * inner + j;
            double m = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < len; ++k) m = std::max(m, x[base + k * inner]);
            double s = 0.0;
            for (std::size_t k = 0; k < len; ++k) {
                const double e = std::exp(x[base + k * inner] - m);
                out[base + k * inner] = e;
                s += e;
            }
            for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= s;
        }
    return out;
}

Tensor avg_pool(const Tensor& x, std::size_t factor) {
    require_chw(x, "avg_pool");
    if (factor == 0) throw ConfigError("avg_pool: factor must be positive");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t oh = (h + factor - 1) / factor, ow = (w + factor - 1) / factor;
    Tensor out(Shape{c, oh, ow});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const std::size_t y1 = std::min(h, (oy + 1) * factor), x1 = std::min(w, (ox + 1) * factor);
                double s = 0.0;
                for (std::size_t y = oy * factor; y < y1; ++y)
                    for (std::size_t xx = ox * factor; xx < x1; ++xx) s += x[(ch * h + y) * w + xx];
                out[(ch * oh + oy) * ow + ox] = s / static_cast<double>((y1 - oy * factor) * (x1 - ox * factor));
            }
    return out;
}

namespace detail {

std::vector<LerpTap> bilinear_taps(std::size_t in_len, std::size_t out_len) {
    std::vector<LerpTap> taps(out_len);
    const double scale = static_cast<double>(in_len) / static_cast<double>(out_len);
    for (std::size_t o = 0; o < out_len; ++o) {
        double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        if (src < 0.0) src = 0.0;
        auto i0 = static_cast<std::size_t>(src);
        if (i0 > in_len - 1) i0 = in_len - 1;
        const std::size_t i1 = std::min(i0 + 1, in_len - 1);
        taps[o] = {i0, i1, i1 == i0 ? 0.0 : src - static_cast<double>(i0)};
    }
    return taps;
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
    if (n == 1) return 0;
    const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
    std::ptrdiff_t r = i % period;
    if (r < 0) r += period;
    if (r >= static_cast<std::ptrdiff_t>(n)) r = period - r;
    return static_cast<std::size_t>(r);
}

}  // namespace detail

Tensor upsample_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    require_chw(x, "upsample_bilinear");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const auto ty = detail::bilinear_taps(h, out_h);
    const auto tx = detail::bilinear_taps(w, out_w);
    Tensor out(Shape{c, out_h, out_w});
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* src = x.ptr() + ch * h * w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const auto& a = ty[oy];
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const auto& b = tx[ox];
                const double top = src[a.i0 * w + b.i0] * (1.0 - b.w1) + src[a.i0 * w + b.i1] * b.w1;
                const double bot = src[a.i1 * w + b.i0] * (1.0 - b.w1) + src[a.i1 * w + b.i1] * b.w1;
                out[(ch * out_h + oy) * out_w + ox] = top * (1.0 - a.w1) + bot * a.w1;
            }
        }
    }
    return out;
}

Tensor concat0(const std::vector<const Tensor*>& parts) {
    if (parts.empty()) throw DimensionError("concat0: no inputs");
    Shape s = parts.front()->shape();
    std::size_t lead = 0;
    for (const Tensor* p : parts) {
        Shape a = p->shape(), b = s;
        if (a.size() != b.size()) throw DimensionError("concat0: rank mismatch " + shape_str(a) + " vs " + shape_str(b));
        a[0] = b[0] = 0;
        if (a != b) throw DimensionError("concat0: trailing extents differ " + shape_str(p->shape()) + " vs " + shape_str(s));
        lead += p->dim(0);
    }
    s[0] = lead;
    Tensor out(s);
    std::size_t off = 0;
    for (const Tensor* p : parts) {
        std::copy(p->data().begin(), p->data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
        off += p->numel();
    }
    return out;
}

Tensor slice0(const Tensor& x, std::size_t begin, std::size_t count) {
    if (count == 0 || begin + count > x.dim(0))
        throw DimensionError("slice0: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                             ") out of bounds for " + shape_str(x.shape()));
    Shape s = x.shape();
    const std::size_t stride = x.numel() / s[0];
    s[0] = count;
    std::vector<double> d(x.data().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                          x.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * stride));
    return Tensor(s, std::move(d));
}

Tensor reflect_pad(const Tensor& x, std::size_t pad_h, std::size_t pad_w) {
    require_chw(x, "reflect_pad");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t oh = h + pad_h, ow = w + pad_w;
    Tensor out(Shape{c, oh, ow});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < oh; ++y) {
            const std::size_t sy = detail::reflect_index(static_cast<std::ptrdiff_t>(y), h);
            for (std::size_t xx = 0; xx < ow; ++xx) {
                const std::size_t sx = detail::reflect_index(static_cast<std::ptrdiff_t>(xx), w);
                out[(ch * oh + y) * ow + xx] = x[(ch * h + sy) * w + sx];
            }
        }
    return out;
}

Tensor crop(const Tensor& x, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
    require_chw(x, "crop");
    if (y0 + h > x.dim(1) || x0 + w > x.dim(2))
        throw DimensionError("crop: window exceeds " + shape_str(x.shape()));
    const std::size_t c = x.dim(0), ih = x.dim(1), iw = x.dim(2);
    Tensor out(Shape{c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx) out[(ch * h + y) * w + xx] = x[(ch * ih + y0 + y) * iw + x0 + xx];
    return out;
}

}  // namespace rdv2::ops
