#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rdv2/ag.hpp"
#include "rdv2/errors.hpp"
#include "rdv2/fft.hpp"
#include "rdv2/kernels.hpp"
#include "rdv2/tensor_ops.hpp"

namespace rdv2::ag {

namespace {

Tape& tape_of(Var a) {
    if (!a.tape) throw ContractError("operation on an unbound variable");
    return *a.tape;
}

Tape& tape_of(Var a, Var b) {
    if (a.tape != b.tape || !a.tape) throw ContractError("operands live on different tapes");
    return *a.tape;
}

// Runs f(slot) only when node `id` wants a gradient.
template <class F>
void with_grad(Tape& t, std::size_t id, F&& f) {
    if (t.requires_grad(id)) f(t.grad_slot(id));
}

// Elementwise unary op whose local derivative is d(x, y) with x the input and y the output.
template <class Fwd, class Deriv>
Var unary(Var a, const char* name, Fwd fwd, Deriv deriv) {
    Tape& t = tape_of(a);
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = fwd(x[i]);
    return t.record(name, {a.id}, std::move(y), [deriv](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        const Tensor& x = tp.value(n.inputs[0]);
        with_grad(tp, n.inputs[0], [&](Tensor& s) {
            for (std::size_t i = 0; i < g.numel(); ++i) s[i] += g[i] * deriv(x[i], n.value[i]);
        });
    });
}

void require_scalar_var(Var s, const char* op) {
    if (s.numel() != 1)
        throw DimensionError(std::string(op) + ": expected a one-element scalar, got " + shape_str(s.shape()));
}

}  // namespace

Var add(Var a, Var b) {
    Tape& t = tape_of(a, b);
    return t.record("add", {a.id, b.id}, ops::add(a.value(), b.value()), [](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        tp.accumulate(n.inputs[0], g);
        tp.accumulate(n.inputs[1], g);
    });
}

Var sub(Var a, Var b) {
    Tape& t = tape_of(a, b);
    return t.record("sub", {a.id, b.id}, ops::sub(a.value(), b.value()), [](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        tp.accumulate(n.inputs[0], g);
        with_grad(tp, n.inputs[1], [&](Tensor& s) {
            for (std::size_t i = 0; i < g.numel(); ++i) s[i] -= g[i];
        });
    });
}

Var mul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    return t.record("mul", {a.id, b.id}, ops::mul(a.value(), b.value()), [](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        const Tensor& x = tp.value(n.inputs[0]);
        const Tensor& y = tp.value(n.inputs[1]);
        with_grad(tp, n.inputs[0], [&](Tensor& s) {
            for (std::size_t i = 0; i < g.numel(); ++i) s[i] += g[i] * y[i];
        });
        with_grad(tp, n.inputs[1], [&](Tensor& s) {
            for (std::size_t i = 0; i < g.numel(); ++i) s[i] += g[i] * x[i];
        });
    });
}

Var div(Var a, Var b) {
    Tape& t = tape_of(a, b);
    return t.record("div", {a.id, b.id}, ops::div(a.value(), b.value()), [](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        const Tensor& y = tp.value(n.inputs[1]);
        with_grad(tp, n.inputs[0], [&](Tensor& s) {
            for (std::size_t i = 0; i < g.numel(); ++i) s[i] += g[i] / y[i];
        });
        with_grad(tp, n.inputs[1], [&](Tensor& s) {
            for (std::size_t i = 0; i < g.numel(); ++i) s[i] -= g[i] * n.value[i] / y[i];
        });
    });
}

Var add_scalar(Var a, double c) {
    return unary(a, "add_scalar", [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}
Var mul_scalar(Var a, double c) {
    return unary(a, "mul_scalar", [c](double x) { return x * c; }, [c](double, double) { return c; });
}
Var neg(Var a) { return mul_scalar(a, -1.0); }
Var square(Var a) {
    return unary(a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}
Var exp(Var a) {
    return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}
Var log(Var a) {
    return unary(a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}
Var pow(Var a, double p) {
    return unary(a, "pow", [p](double x) { return std::pow(x, p); },
                 [p](double x, double) { return p * std::pow(x, p - 1.0); });
}
Var sqrt(Var a) {
    return unary(a, "sqrt", [](double x) { return std::sqrt(x); },
                 [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}
Var tanh(Var a) {
    return unary(a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}
Var sigmoid(Var a) {
    return unary(a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                 [](double, double y) { return y * (1.0 - y); });
}
Var relu(Var a) {
    return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}
Var silu(Var a) {
    return unary(a, "silu", [](double x) { return x / (1.0 + std::exp(-x)); },
                 [](double x, double) {
                     const double s = 1.0 / (1.0 + std::exp(-x));
                     return s * (1.0 + x * (1.0 - s));
                 });
}
Var abs(Var a) {
    return unary(a, "abs", [](double x) { return std::abs(x); },
                 [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}
Var clip(Var a, double lo, double hi) {
    return unary(a, "clip", [lo, hi](double x) { return std::clamp(x, lo, hi); },
                 [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}
Var sin(Var a) {
    return unary(a, "sin", [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}
Var cos(Var a) {
    return unary(a, "cos", [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Var atan2(Var y, Var x) {
    Tape& t = tape_of(y, x);
    require_same_shape(y.value(), x.value(), "atan2");
    Tensor out(y.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::atan2(y.value()[i], x.value()[i]);
    return t.record("atan2", {y.id, x.id}, std::move(out), [](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        const Tensor& yv = tp.value(n.inputs[0]);
        const Tensor& xv = tp.value(n.inputs[1]);
        with_grad(tp, n.inputs[0], [&](Tensor& s) {
            for (std::size_t i = 0; i < g.numel(); ++i) {
                const double r2 = xv[i] * xv[i] + yv[i] * yv[i];
                if (r2 > 0.0) s[i] += g[i] * xv[i] / r2;
            }
        });
        with_grad(tp, n.inputs[1], [&](Tensor& s) {
            for (std::size_t i = 0; i < g.numel(); ++i) {
                const double r2 = xv[i] * xv[i] + yv[i] * yv[i];
                if (r2 > 0.0) s[i] -= g[i] * yv[i] / r2;
            }
        });
    });
}

Var hypot(Var x, Var y) {
    Tape& t = tape_of(x, y);
    require_same_shape(x.value(), y.value(), "hypot");
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = std::sqrt(x.value()[i] * x.value()[i] + y.value()[i] * y.value()[i]);
    return t.record("hypot", {x.id, y.id}, std::move(out), [](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        for (int k = 0; k < 2; ++k) {
            const Tensor& v = tp.value(n.inputs[k]);
            with_grad(tp, n.inputs[k], [&](Tensor& s) {
                for (std::size_t i = 0; i < g.numel(); ++i)
                    if (n.value[i] > 0.0) s[i] += g[i] * v[i] / n.value[i];
            });
        }
    });
}

Var add_sv(Var a, Var s) {
    Tape& t = tape_of(a, s);
    require_scalar_var(s, "add_sv");
    return t.record("add_sv", {a.id, s.id}, ops::add_scalar(a.value(), s.value()[0]), [](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        tp.accumulate(n.inputs[0], g);
        with_grad(tp, n.inputs[1], [&](Tensor& sg) { sg[0] += ops::sum(g); });
    });
}

Var mul_sv(Var a, Var s) {
    Tape& t = tape_of(a, s);
    require_scalar_var(s, "mul_sv");
    return t.record("mul_sv", {a.id, s.id}, ops::mul_scalar(a.value(), s.value()[0]), [](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        const Tensor& x = tp.value(n.inputs[0]);
        const double sv = tp.value(n.inputs[1])[0];
        with_grad(tp, n.inputs[0], [&](Tensor& d) {
            for (std::size_t i = 0; i < g.numel(); ++i) d[i] += g[i] * sv;
        });
        with_grad(tp, n.inputs[1], [&](Tensor& d) {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.numel(); ++i) acc += g[i] * x[i];
            d[0] += acc;
        });
    });
}

Var div_sv(Var a, Var s) {
    Tape& t = tape_of(a, s);
    require_scalar_var(s, "div_sv");
    const double sv = s.value()[0];
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] / sv;
    return t.record("div_sv", {a.id, s.id}, std::move(out), [](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        const double sv = tp.value(n.inputs[1])[0];
        with_grad(tp, n.inputs[0], [&](Tensor& d) {
            for (std::size_t i = 0; i < g.numel(); ++i) d[i] += g[i] / sv;
        });
        with_grad(tp, n.inputs[1], [&](Tensor& d) {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.numel(); ++i) acc += g[i] * n.value[i];
            d[0] -= acc / sv;
        });
    });
}

Var scale_channels(Var a, Var s) {
    Tape& t = tape_of(a, s);
    const std::size_t c = a.value().dim(0);
    if (s.numel() != c)
        throw DimensionError("scale_channels: scale " + shape_str(s.shape()) + " vs input " + shape_str(a.shape()));
    const std::size_t plane = a.numel() / c;
    Tensor out(a.shape());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i) out[ch * plane + i] = a.value()[ch * plane + i] * s.value()[ch];
    return t.record("scale_channels", {a.id, s.id}, std::move(out), [c, plane](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        const Tensor& x = tp.value(n.inputs[0]);
        const Tensor& sv = tp.value(n.inputs[1]);
        with_grad(tp, n.inputs[0], [&](Tensor& d) {
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t i = 0; i < plane; ++i) d[ch * plane + i] += g[ch * plane + i] * sv[ch];
        });
        with_grad(tp, n.inputs[1], [&](Tensor& d) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t i = 0; i < plane; ++i) acc += g[ch * plane + i] * x[ch * plane + i];
                d[ch] += acc;
            }
        });
    });
}

Var element(Var a, std::size_t i) {
    Tape& t = tape_of(a);
    if (i >= a.numel()) throw DimensionError("element: index out of range for " + shape_str(a.shape()));
    return t.record("element", {a.id}, Tensor::scalar(a.value()[i]), [i](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        with_grad(tp, n.inputs[0], [&](Tensor& d) { d[i] += tp.upstream(self)[0]; });
    });
}

Var magnitude_floor(Var a, double floor) {
    return unary(
        a, "magnitude_floor",
        [floor](double x) { return std::abs(x) < floor ? (x < 0.0 ? -floor : floor) : x; },
        [floor](double x, double) { return std::abs(x) < floor ? 0.0 : 1.0; });
}

Var sum(Var a) {
    Tape& t = tape_of(a);
    return t.record("sum", {a.id}, Tensor::scalar(ops::sum(a.value())), [](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const double g = tp.upstream(self)[0];
        with_grad(tp, n.inputs[0], [&](Tensor& d) {
            for (auto& v : d.data()) v += g;
        });
    });
}

Var mean(Var a) { return mul_scalar(sum(a), 1.0 / static_cast<double>(a.numel())); }

namespace {
void split_axis(const Shape& s, std::size_t axis, std::size_t& outer, std::size_t& len, std::size_t& inner) {
    if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    outer = std::accumulate(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(axis), std::size_t{1},
                            std::multiplies<>());
    inner = std::accumulate(s.begin() + static_cast<std::ptrdiff_t>(axis) + 1, s.end(), std::size_t{1},
                            std::multiplies<>());
    len = s[axis];
}
}  // namespace

Var sum(Var a, std::size_t axis) {
    Tape& t = tape_of(a);
    std::size_t outer, len, inner;
    split_axis(a.shape(), axis, outer, len, inner);
    return t.record("sum_axis", {a.id}, ops::sum(a.value(), axis), [=](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        with_grad(tp, n.inputs[0], [&](Tensor& d) {
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t k = 0; k < len; ++k)
                    for (std::size_t j = 0; j < inner; ++j) d[(o * len + k) * inner + j] += g[o * inner + j];
        });
    });
}

Var mean(Var a, std::size_t axis) {
    const double len = static_cast<double>(a.value().dim(axis));
    return mul_scalar(sum(a, axis), 1.0 / len);
}

Var min(Var a, std::size_t axis) {
    Tape& t = tape_of(a);
    std::size_t outer, len, inner;
    split_axis(a.shape(), axis, outer, len, inner);
    const Tensor& x = a.value();
    std::vector<std::size_t> arg(outer * inner);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < inner; ++j) {
            std::size_t best = o * len * inner + j;
            for (std::size_t k = 1; k < len; ++k) {
                const std::size_t idx = (o * len + k) * inner + j;
                if (x[idx] < x[best]) best = idx;
            }
            arg[o * inner + j] = best;
        }
    return t.record("min_axis", {a.id}, ops::min(x, axis), [arg](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        with_grad(tp, n.inputs[0], [&](Tensor& d) {
            for (std::size_t i = 0; i < arg.size(); ++i) d[arg[i]] += g[i];
        });
    });
}

Var percentile(Var a, double p) {
    Tape& t = tape_of(a);
    if (!(p >= 0.0 && p <= 100.0)) throw ContractError("percentile must lie in [0, 100]");
    const Tensor& x = a.value();
    std::vector<std::size_t> order(x.numel());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
    const double rank = p / 100.0 * static_cast<double>(x.numel() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, x.numel() - 1);
    const double frac = rank - static_cast<double>(lo);
    const std::size_t ilo = order[lo], ihi = order[hi];
    const double v = x[ilo] + (x[ihi] - x[ilo]) * frac;
    return t.record("percentile", {a.id}, Tensor::scalar(v), [=](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const double g = tp.upstream(self)[0];
        with_grad(tp, n.inputs[0], [&](Tensor& d) {
            d[ilo] += g * (1.0 - frac);
            d[ihi] += g * frac;
        });
    });
}

Var reshape(Var a, Shape shape) {
    Tape& t = tape_of(a);
    return t.record("reshape", {a.id}, a.value().reshaped(std::move(shape)), [](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        with_grad(tp, n.inputs[0], [&](Tensor& d) {
            for (std::size_t i = 0; i < g.numel(); ++i) d[i] += g[i];
        });
    });
}

Var matmul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    return t.record("matmul", {a.id, b.id}, ops::matmul(a.value(), b.value()), [](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        const Tensor& x = tp.value(n.inputs[0]);
        const Tensor& y = tp.value(n.inputs[1]);
        if (tp.requires_grad(n.inputs[0])) tp.accumulate(n.inputs[0], ops::matmul(g, ops::transpose(y)));
        if (tp.requires_grad(n.inputs[1])) tp.accumulate(n.inputs[1], ops::matmul(ops::transpose(x), g));
    });
}

Var transpose(Var a) {
    Tape& t = tape_of(a);
    return t.record("transpose", {a.id}, ops::transpose(a.value()), [](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        if (tp.requires_grad(n.inputs[0])) tp.accumulate(n.inputs[0], ops::transpose(tp.upstream(self)));
    });
}

Var softmax(Var a, std::size_t axis) {
    Tape& t = tape_of(a);
    std::size_t outer, len, inner;
    split_axis(a.shape(), axis, outer, len, inner);
    return t.record("softmax", {a.id}, ops::softmax(a.value(), axis), [=](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        const Tensor& y = n.value;
        with_grad(tp, n.inputs[0], [&](Tensor& d) {
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t j = 0; j < inner; ++j) {
                    const std::size_t base = o * len * inner + j;
                    double dot = 0.0;
                    for (std::size_t k = 0; k < len; ++k) dot += g[base + k * inner] * y[base + k * inner];
                    for (std::size_t k = 0; k < len; ++k) {
                        const std::size_t i = base + k * inner;
                        d[i] += y[i] * (g[i] - dot);
                    }
                }
        });
    });
}

Var conv2d(Var x, Var w, Var bias, std::size_t stride, std::size_t padding, std::size_t groups) {
    Tape& t = tape_of(x, w);
    const bool has_bias = bias.tape != nullptr;
    if (has_bias && bias.tape != &t) throw ContractError("conv2d: bias on a different tape");
    const auto geom = ops::conv_geometry(x.shape(), w.shape(), stride, padding, groups);
    Tensor out = ops::conv2d(x.value(), w.value(), has_bias ? &bias.value() : nullptr, stride, padding, groups);
    std::vector<std::size_t> inputs{x.id, w.id};
    if (has_bias) inputs.push_back(bias.id);
    return t.record("conv2d", std::move(inputs), std::move(out), [geom, has_bias](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        const bool par = kernels::use_parallel();
        if (tp.requires_grad(n.inputs[0])) {
            Tensor gi(tp.value(n.inputs[0]).shape());
            if (par)
                kernels::parallel::conv2d_backward_input(g.ptr(), tp.value(n.inputs[1]).ptr(), gi.ptr(), geom);
            else
                kernels::serial::conv2d_backward_input(g.ptr(), tp.value(n.inputs[1]).ptr(), gi.ptr(), geom);
            tp.accumulate(n.inputs[0], gi);
        }
        if (tp.requires_grad(n.inputs[1])) {
            Tensor gw(tp.value(n.inputs[1]).shape());
            if (par)
                kernels::parallel::conv2d_backward_weight(g.ptr(), tp.value(n.inputs[0]).ptr(), gw.ptr(), geom);
            else
                kernels::serial::conv2d_backward_weight(g.ptr(), tp.value(n.inputs[0]).ptr(), gw.ptr(), geom);
            tp.accumulate(n.inputs[1], gw);
        }
        if (has_bias) {
            with_grad(tp, n.inputs[2], [&](Tensor& d) {
                const std::size_t plane = geom.out_h * geom.out_w;
                for (std::size_t c = 0; c < geom.out_channels; ++c) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) acc += g[c * plane + i];
                    d[c] += acc;
                }
            });
        }
    });
}

Var avg_pool(Var x, std::size_t factor) {
    Tape& t = tape_of(x);
    return t.record("avg_pool", {x.id}, ops::avg_pool(x.value(), factor), [factor](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        const Shape& s = tp.value(n.inputs[0]).shape();
        const std::size_t c = s[0], h = s[1], w = s[2];
        const std::size_t oh = n.value.dim(1), ow = n.value.dim(2);
        with_grad(tp, n.inputs[0], [&](Tensor& d) {
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t oy = 0; oy < oh; ++oy)
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const std::size_t y1 = std::min(h, (oy + 1) * factor), x1 = std::min(w, (ox + 1) * factor);
                        const double share = g[(ch * oh + oy) * ow + ox] /
                                             static_cast<double>((y1 - oy * factor) * (x1 - ox * factor));
                        for (std::size_t y = oy * factor; y < y1; ++y)
                            for (std::size_t xx = ox * factor; xx < x1; ++xx) d[(ch * h + y) * w + xx] += share;
                    }
        });
    });
}

Var upsample_bilinear(Var x, std::size_t out_h, std::size_t out_w) {
    Tape& t = tape_of(x);
    return t.record("upsample_bilinear", {x.id}, ops::upsample_bilinear(x.value(), out_h, out_w),
                    [out_h, out_w](Tape& tp, std::size_t self) {
                        const auto& n = tp.node(self);
                        const Tensor& g = tp.upstream(self);
                        const Shape& s = tp.value(n.inputs[0]).shape();
                        const std::size_t c = s[0], h = s[1], w = s[2];
                        const auto ty = ops::detail::bilinear_taps(h, out_h);
                        const auto tx = ops::detail::bilinear_taps(w, out_w);
                        with_grad(tp, n.inputs[0], [&](Tensor& d) {
                            for (std::size_t ch = 0; ch < c; ++ch) {
                                double* dst = d.ptr() + ch * h * w;
                                for (std::size_t oy = 0; oy < out_h; ++oy)
                                    for (std::size_t ox = 0; ox < out_w; ++ox) {
                                        const double gv = g[(ch * out_h + oy) * out_w + ox];
                                        const auto& a = ty[oy];
                                        const auto& b = tx[ox];
                                        dst[a.i0 * w + b.i0] += gv * (1.0 - a.w1) * (1.0 - b.w1);
                                        dst[a.i0 * w + b.i1] += gv * (1.0 - a.w1) * b.w1;
                                        dst[a.i1 * w + b.i0] += gv * a.w1 * (1.0 - b.w1);
                                        dst[a.i1 * w + b.i1] += gv * a.w1 * b.w1;
                                    }
                            }
                        });
                    });
}

Var concat0(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat0: no inputs");
    Tape& t = tape_of(parts.front());
    std::vector<const Tensor*> vals;
    std::vector<std::size_t> ids;
    for (const Var& p : parts) {
        tape_of(parts.front(), p);
        vals.push_back(&p.value());
        ids.push_back(p.id);
    }
    return t.record("concat0", ids, ops::concat0(vals), [](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        std::size_t off = 0;
        for (auto id : n.inputs) {
            const std::size_t len = tp.value(id).numel();
            with_grad(tp, id, [&](Tensor& d) {
                for (std::size_t i = 0; i < len; ++i) d[i] += g[off + i];
            });
            off += len;
        }
    });
}

Var slice0(Var x, std::size_t begin, std::size_t count) {
    Tape& t = tape_of(x);
    Tensor out = ops::slice0(x.value(), begin, count);
    const std::size_t offset = begin * (x.numel() / x.value().dim(0));
    return t.record("slice0", {x.id}, std::move(out), [offset](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        with_grad(tp, n.inputs[0], [&](Tensor& d) {
            for (std::size_t i = 0; i < g.numel(); ++i) d[offset + i] += g[i];
        });
    });
}

Var block_diag(const std::vector<Var>& blocks) {
    if (blocks.empty()) throw DimensionError("block_diag: no inputs");
    Tape& t = tape_of(blocks.front());
    const Shape bs = blocks.front().shape();
    if (bs.size() != 2 || bs[0] != bs[1]) throw DimensionError("block_diag: blocks must be square, got " + shape_str(bs));
    const std::size_t d = bs[0], n = d * blocks.size();
    Tensor out(Shape{n, n});
    std::vector<std::size_t> ids;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        tape_of(blocks.front(), blocks[b]);
        const Tensor& v = blocks[b].value();
        if (v.shape() != bs) throw DimensionError("block_diag: block " + shape_str(v.shape()) + " differs from " + shape_str(bs));
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) out[(b * d + i) * n + b * d + j] = v[i * d + j];
        ids.push_back(blocks[b].id);
    }
    return t.record("block_diag", ids, std::move(out), [d, n](Tape& tp, std::size_t self) {
        const auto& nd = tp.node(self);
        const Tensor& g = tp.upstream(self);
        for (std::size_t b = 0; b < nd.inputs.size(); ++b)
            with_grad(tp, nd.inputs[b], [&](Tensor& gb) {
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t j = 0; j < d; ++j) gb[i * d + j] += g[(b * d + i) * n + b * d + j];
            });
    });
}

Var repeat0(Var x, std::size_t times) {
    Tape& t = tape_of(x);
    if (times == 0) throw DimensionError("repeat0: times must be positive");
    if (times == 1) return x;
    std::vector<const Tensor*> copies(times, &x.value());
    return t.record("repeat0", {x.id}, ops::concat0(copies), [times](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        with_grad(tp, n.inputs[0], [&](Tensor& d) {
            const std::size_t len = d.numel();
            for (std::size_t r = 0; r < times; ++r)
                for (std::size_t i = 0; i < len; ++i) d[i] += g[r * len + i];
        });
    });
}

Var linear_scan(Var x, Var lambda) {
    Tape& t = tape_of(x, lambda);
    const Tensor& xv = x.value();
    if (xv.ndim() != 2 || lambda.numel() != xv.dim(0))
        throw DimensionError("linear_scan: expects x [C x N] and lambda [C], got " + shape_str(xv.shape()) + " and " +
                             shape_str(lambda.shape()));
    const std::size_t c = xv.dim(0), len = xv.dim(1);
    Tensor h(xv.shape());
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double a = 1.0 / (1.0 + std::exp(-lambda.value()[ch]));
        double state = 0.0;
        for (std::size_t k = 0; k < len; ++k) {
            state = a * state + (1.0 - a) * xv[ch * len + k];
            h[ch * len + k] = state;
        }
    }
    return t.record("linear_scan", {x.id, lambda.id}, std::move(h), [c, len](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Tensor& g = tp.upstream(self);
        const Tensor& xv = tp.value(n.inputs[0]);
        const Tensor& lam = tp.value(n.inputs[1]);
        const bool gx = tp.requires_grad(n.inputs[0]), gl = tp.requires_grad(n.inputs[1]);
        Tensor dx(xv.shape());
        Tensor dl(lam.shape());
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double a = 1.0 / (1.0 + std::exp(-lam[ch]));
            double carry = 0.0, da = 0.0;
            for (std::size_t k = len; k-- > 0;) {
                const double gh = g[ch * len + k] + a * carry;
                dx[ch * len + k] = (1.0 - a) * gh;
                const double prev = k ? n.value[ch * len + k - 1] : 0.0;
                da += gh * (prev - xv[ch * len + k]);
                carry = gh;
            }
            dl[ch] = da * a * (1.0 - a);
        }
        if (gx) tp.accumulate(n.inputs[0], dx);
        if (gl) tp.accumulate(n.inputs[1], dl);
    });
}

namespace {
Tensor pack(const Spectrum& s) {
    Shape shape = s.re.shape();
    shape.insert(shape.begin(), 2);
    return ops::concat0({&s.re, &s.im}).reshaped(shape);
}

Spectrum unpack(const Tensor& z) {
    Shape inner(z.shape().begin() + 1, z.shape().end());
    const std::size_t n = z.numel() / 2;
    Spectrum s{Tensor(inner), Tensor(inner)};
    std::copy(z.data().begin(), z.data().begin() + static_cast<std::ptrdiff_t>(n), s.re.data().begin());
    std::copy(z.data().begin() + static_cast<std::ptrdiff_t>(n), z.data().end(), s.im.data().begin());
    return s;
}

double plane_size(const Shape& s) { return static_cast<double>(s[s.size() - 1] * s[s.size() - 2]); }
}  // namespace

Var fft2(Var x) {
    Tape& t = tape_of(x);
    return t.record("fft2", {x.id}, pack(rdv2::fft2(x.value())), [](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Spectrum g = unpack(tp.upstream(self));
        // Adjoint of the unnormalized DFT restricted to real input: Re(N * ifft2(g)).
        const Spectrum back = rdv2::ifft2(g.re, g.im);
        const double scale = plane_size(g.re.shape());
        with_grad(tp, n.inputs[0], [&](Tensor& d) {
            for (std::size_t i = 0; i < d.numel(); ++i) d[i] += back.re[i] * scale;
        });
    });
}

Var ifft2(Var z) {
    Tape& t = tape_of(z);
    if (z.value().ndim() < 3 || z.value().dim(0) != 2)
        throw DimensionError("ifft2 expects a packed complex tensor [2 x ... x H x W], got " + shape_str(z.shape()));
    const Spectrum in = unpack(z.value());
    return t.record("ifft2", {z.id}, pack(rdv2::ifft2(in.re, in.im)), [](Tape& tp, std::size_t self) {
        const auto& n = tp.node(self);
        const Spectrum g = unpack(tp.upstream(self));
        const Spectrum fwd = rdv2::fft2(g.re, g.im);
        const double inv = 1.0 / plane_size(g.re.shape());
        with_grad(tp, n.inputs[0], [&](Tensor& d) {
            const std::size_t half = d.numel() / 2;
            for (std::size_t i = 0; i < half; ++i) {
                d[i] += fwd.re[i] * inv;
                d[half + i] += fwd.im[i] * inv;
            }
        });
    });
}

}  // namespace rdv2::ag
