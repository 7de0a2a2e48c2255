#include <cmath>

#include "doctest.h"
#include "rdv2/ag.hpp"
#include "rdv2/errors.hpp"
#include "rdv2/kernels.hpp"
#include "rdv2/rng.hpp"
#include "rdv2/tensor_ops.hpp"
#include "support/gradcheck.hpp"

using namespace rdv2;
using rdv2::testing::check_inputs;
using rdv2::testing::probe;

namespace {

constexpr double kTol = 1e-4;

void require_grad_ok(const testing::InputFn& f, const std::vector<Tensor>& inputs, const char* what) {
    auto rep = check_inputs(f, inputs);
    INFO(what << " worst " << rep.worst << " at " << rep.worst_name);
    CHECK(rep.worst < kTol);
}

Tensor positive(const Shape& s, std::uint64_t seed) { return rng_uniform(s, seed, 0.2, 2.0); }

}  // namespace

TEST_CASE("backward: linear case gives x exactly") {
    Tape t;
    ParamStore ps;
    Parameter& w = ps.add("w", rng_randn({3, 4}, 1));
    Tensor x = rng_randn({3, 4}, 2);
    Var loss = ag::sum(ag::mul(t.param(w), t.constant(x)));
    t.backward(loss);
    CHECK(w.grad == x);
}

TEST_CASE("backward: sum of softmax has zero gradient") {
    Tape t;
    Var x = t.leaf(rng_randn({4, 6}, 3));
    t.backward(ag::sum(ag::softmax(x, 1)));
    CHECK(ops::max(ops::abs(t.grad(x))) < 1e-10);
}

TEST_CASE("backward: fan-out sums both paths") {
    auto f = [](Tape& t, const std::vector<Var>& v) {
        Var y = ag::mul(ag::tanh(v[0]), ag::exp(v[0]));
        return ag::sum(ag::add(y, ag::square(v[0])));
    };
    require_grad_ok(f, {rng_randn({5}, 4)}, "fan-out");

    Tape t;
    Var x = t.leaf(Tensor::from({1}, {2.0}));
    t.backward(ag::sum(ag::mul(x, x)));
    CHECK(t.grad(x)[0] == 4.0);
}

TEST_CASE("backward: contract errors") {
    Tape t;
    Var x = t.leaf(rng_randn({3}, 5));
    CHECK_THROWS_AS(t.backward(ag::exp(x)), ContractError);

    Tape u;
    Var y = u.leaf(rng_randn({3}, 5));
    Var l = ag::sum(y);
    u.backward(l);
    CHECK_THROWS_AS(u.backward(l), ContractError);
    u.reset();
    CHECK(u.size() == 0);
}

TEST_CASE("tape records inputs before consumers") {
    Tape t;
    Var a = t.leaf(rng_randn({2, 2}, 1));
    Var b = ag::matmul(a, ag::transpose(a));
    ag::sum(ag::relu(b));
    for (std::size_t i = 0; i < t.size(); ++i)
        for (auto in : t.node(i).inputs) CHECK(in < i);
}

TEST_CASE("finite differences: every differentiable op over five seeds") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const std::uint64_t s = seed * 101;
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::matmul(v[0], v[1]), s); },
                        {rng_randn({3, 4}, s), rng_randn({4, 2}, s + 1)}, "matmul");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::conv2d(v[0], v[1], v[2], 1, 1, 1), s); },
                        {rng_randn({2, 5, 5}, s), rng_randn({3, 2, 3, 3}, s + 1), rng_randn({3}, s + 2)}, "conv2d");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::conv2d(v[0], v[1], v[2], 2, 1, 2), s); },
                        {rng_randn({4, 6, 5}, s), rng_randn({2, 2, 3, 3}, s + 1), rng_randn({2}, s + 2)},
                        "conv2d strided grouped");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::softmax(v[0], 1), s); },
                        {rng_randn({3, 5}, s)}, "softmax");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::softmax(v[0], 0), s); },
                        {rng_randn({3, 5}, s)}, "softmax axis0");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::ifft2(ag::fft2(v[0])), s); },
                        {rng_randn({2, 4, 8}, s)}, "fft2/ifft2");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::fft2(v[0]), s); }, {rng_randn({4, 4}, s)}, "fft2");
        require_grad_ok(
            [s](Tape& t, auto v) {
                Var z = ag::concat0({ag::reshape(v[0], {1, 4, 4}), ag::reshape(v[1], {1, 4, 4})});
                return probe(t, ag::ifft2(z), s);
            },
            {rng_randn({4, 4}, s), rng_randn({4, 4}, s + 1)}, "ifft2 complex");

        const Tensor a = rng_randn({3, 4}, s), b = rng_randn({3, 4}, s + 1), p = positive({3, 4}, s + 2);
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::add(v[0], v[1]), s); }, {a, b}, "add");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::sub(v[0], v[1]), s); }, {a, b}, "sub");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::mul(v[0], v[1]), s); }, {a, b}, "mul");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::div(v[0], v[1]), s); }, {a, p}, "div");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::log(v[0]), s); }, {p}, "log");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::exp(v[0]), s); }, {a}, "exp");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::pow(v[0], 1.7), s); }, {p}, "pow");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::sqrt(v[0]), s); }, {p}, "sqrt");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::tanh(v[0]), s); }, {a}, "tanh");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::sigmoid(v[0]), s); }, {a}, "sigmoid");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::relu(v[0]), s); }, {a}, "relu");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::silu(v[0]), s); }, {a}, "silu");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::clip(v[0], -0.5, 0.5), s); }, {a}, "clip");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::abs(v[0]), s); }, {a}, "abs");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::sin(v[0]), s); }, {a}, "sin");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::cos(v[0]), s); }, {a}, "cos");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::atan2(v[0], v[1]), s); }, {a, b}, "atan2");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::hypot(v[0], v[1]), s); }, {a, b}, "hypot");
        require_grad_ok([](Tape&, auto v) { return ag::mean(ag::square(v[0])); }, {a}, "mean");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::sum(v[0], 1), s); }, {a}, "sum axis");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::mean(v[0], 0), s); }, {a}, "mean axis");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::min(v[0], 0), s); }, {a}, "min axis");
        require_grad_ok([](Tape&, auto v) { return ag::percentile(v[0], 37.0); }, {a}, "percentile");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::mul_sv(v[0], v[1]), s); },
                        {a, rng_randn({1}, s + 3)}, "mul_sv");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::div_sv(v[0], v[1]), s); },
                        {a, positive({1}, s + 3)}, "div_sv");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::add_sv(v[0], v[1]), s); },
                        {a, rng_randn({1}, s + 3)}, "add_sv");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::scale_channels(v[0], v[1]), s); },
                        {rng_randn({3, 2, 2}, s), rng_randn({3}, s + 1)}, "scale_channels");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::transpose(v[0]), s); }, {a}, "transpose");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::avg_pool(v[0], 2), s); },
                        {rng_randn({2, 5, 7}, s)}, "avg_pool");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::upsample_bilinear(v[0], 7, 9), s); },
                        {rng_randn({2, 3, 4}, s)}, "upsample");
        require_grad_ok(
            [s](Tape& t, auto v) { return probe(t, ag::concat0({ag::slice0(v[0], 1, 2), v[1], ag::repeat0(v[1], 2)}), s); },
            {rng_randn({3, 2, 2}, s), rng_randn({1, 2, 2}, s + 1)}, "concat/slice/repeat");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::block_diag({v[0], v[1], v[0]}), s); },
                        {rng_randn({2, 2}, s), rng_randn({2, 2}, s + 1)}, "block_diag");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::conv2d(v[0], v[1], v[2]), s); },
                        {rng_randn({5, 3, 4}, s), rng_randn({6, 5, 1, 1}, s + 1), rng_randn({6}, s + 2)}, "conv2d 1x1");
        require_grad_ok([s](Tape& t, auto v) { return probe(t, ag::linear_scan(v[0], v[1]), s); },
                        {rng_randn({3, 9}, s), rng_randn({3}, s + 1)}, "linear_scan");
    }
}

TEST_CASE("kernels: serial and parallel variants are bitwise identical") {
    Tensor a = rng_randn({37, 19}, 1), b = rng_randn({19, 23}, 2);
    Tensor c1(Shape{37, 23}), c2(Shape{37, 23});
    kernels::serial::matmul(a.ptr(), b.ptr(), c1.ptr(), 37, 19, 23);
    kernels::parallel::matmul(a.ptr(), b.ptr(), c2.ptr(), 37, 19, 23);
    CHECK(c1 == c2);

    Tensor x = rng_randn({6, 17, 13}, 3), w = rng_randn({8, 3, 3, 3}, 4), bias = rng_randn({8}, 5);
    const auto g = ops::conv_geometry(x.shape(), w.shape(), 2, 1, 2);
    Tensor o1(Shape{g.out_channels, g.out_h, g.out_w}), o2 = o1;
    kernels::serial::conv2d_forward(x.ptr(), w.ptr(), bias.ptr(), o1.ptr(), g);
    kernels::parallel::conv2d_forward(x.ptr(), w.ptr(), bias.ptr(), o2.ptr(), g);
    CHECK(o1 == o2);

    Tensor go = rng_randn(o1.shape(), 6);
    Tensor gi1(x.shape()), gi2(x.shape()), gw1(w.shape()), gw2(w.shape());
    kernels::serial::conv2d_backward_input(go.ptr(), w.ptr(), gi1.ptr(), g);
    kernels::parallel::conv2d_backward_input(go.ptr(), w.ptr(), gi2.ptr(), g);
    kernels::serial::conv2d_backward_weight(go.ptr(), x.ptr(), gw1.ptr(), g);
    kernels::parallel::conv2d_backward_weight(go.ptr(), x.ptr(), gw2.ptr(), g);
    CHECK(gi1 == gi2);
    CHECK(gw1 == gw2);
}

TEST_CASE("kernels: wide and ragged matmul, pointwise conv against loops") {
    // 7 rows leaves a partial row group; 1100 columns leaves a partial column block
    Tensor a = rng_randn({7, 5}, 11), b = rng_randn({5, 1100}, 12);
    Tensor c1(Shape{7, 1100}), c2(Shape{7, 1100});
    kernels::serial::matmul(a.ptr(), b.ptr(), c1.ptr(), 7, 5, 1100);
    kernels::parallel::matmul(a.ptr(), b.ptr(), c2.ptr(), 7, 5, 1100);
    CHECK(c1 == c2);
    bool same = true;
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 1100; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < 5; ++p) acc += a[i * 5 + p] * b[p * 1100 + j];
            same = same && acc == c1[i * 1100 + j];
        }
    CHECK(same);

    Tensor x = rng_randn({5, 9, 70}, 13), w = rng_randn({6, 5, 1, 1}, 14), bias = rng_randn({6}, 15);
    const auto g = ops::conv_geometry(x.shape(), w.shape(), 1, 0, 1);
    Tensor o(Shape{6, 9, 70});
    kernels::serial::conv2d_forward(x.ptr(), w.ptr(), bias.ptr(), o.ptr(), g);
    same = true;
    for (std::size_t co = 0; co < 6; ++co)
        for (std::size_t i = 0; i < 630; ++i) {
            double acc = bias[co];
            for (std::size_t ci = 0; ci < 5; ++ci) acc += w[co * 5 + ci] * x[ci * 630 + i];
            same = same && acc == o[co * 630 + i];
        }
    CHECK(same);
}

TEST_CASE("block_diag: placement and zeros") {
    Tape t;
    Var m = ag::block_diag({t.constant(Tensor::from({2, 2}, {1, 2, 3, 4})), t.constant(Tensor::from({2, 2}, {5, 6, 7, 8}))});
    CHECK(m.value() == Tensor::from({4, 4}, {1, 2, 0, 0, 3, 4, 0, 0, 0, 0, 5, 6, 0, 0, 7, 8}));
    CHECK_THROWS_AS(ag::block_diag({t.constant(Tensor::zeros({2, 3}))}), DimensionError);
    CHECK_THROWS_AS(ag::block_diag({t.constant(Tensor::zeros({2, 2})), t.constant(Tensor::zeros({3, 3}))}),
                    DimensionError);
}

TEST_CASE("linear_scan: unrolled recurrence and pass-through limit") {
    Tape t;
    Var x = t.constant(Tensor::from({1, 4}, {1, 0, 0, 0}));
    Var h = ag::linear_scan(x, t.constant(Tensor::from({1}, {0.0})));  // a = 0.5
    const double want[] = {0.5, 0.25, 0.125, 0.0625};
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(h.value()[i] - want[i]) < 1e-15);

    Tensor seq = rng_randn({2, 6}, 7);
    Var p = ag::linear_scan(t.constant(seq), t.constant(Tensor::from({2}, {-800.0, -800.0})));
    CHECK(ops::max_abs_diff(p.value(), seq) == 0.0);
}
