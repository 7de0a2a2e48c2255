#pragma once

// Central finite-difference checks against the tape. Errors are measured
// per tensor as ||analytic - numeric|| / max(||analytic||, ||numeric||, floor)
// over the checked coordinates. The floor is 1e-4 of the largest gradient
// norm in the same check: a tensor whose whole gradient sits near the
// finite-difference roundoff level is judged against the check's scale.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rdv2/ag.hpp"
#include "rdv2/autograd.hpp"
#include "rdv2/rng.hpp"

namespace rdv2::testing {

struct GradCheckReport {
    double worst = 0.0;
    std::string worst_name;
    std::size_t tensors = 0;
    std::size_t coords = 0;
};

inline double rel_error(const std::vector<double>& a, const std::vector<double>& n, double floor = 1e-8) {
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - n[i]) * (a[i] - n[i]);
        na += a[i] * a[i];
        nn += n[i] * n[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), floor});
}

inline std::vector<std::size_t> pick_coords(std::size_t numel, std::size_t max_coords, Rng& rng) {
    std::vector<std::size_t> idx;
    if (numel <= max_coords) {
        for (std::size_t i = 0; i < numel; ++i) idx.push_back(i);
        return idx;
    }
    for (std::size_t k = 0; k < max_coords; ++k) idx.push_back(static_cast<std::size_t>(rng.below(numel)));
    return idx;
}

struct Samples {
    std::string name;
    std::vector<double> a, n;
    double full_norm = 0.0;
};

inline double norm(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += v * v;
    return std::sqrt(s);
}

inline GradCheckReport summarize(const std::vector<Samples>& all) {
    double scale = 0.0;
    for (const auto& s : all) scale = std::max(scale, s.full_norm);
    const double floor = std::max(1e-8, 1e-4 * scale);
    GradCheckReport rep;
    for (const auto& s : all) {
        const double e = rel_error(s.a, s.n, floor);
        ++rep.tensors;
        rep.coords += s.a.size();
        if (e >= rep.worst) {
            rep.worst = e;
            rep.worst_name = s.name;
        }
    }
    return rep;
}

using InputFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Differentiates f with respect to every input tensor.
inline GradCheckReport check_inputs(const InputFn& f, std::vector<Tensor> inputs, double h = 1e-5,
                                    std::size_t max_coords = 64, std::uint64_t seed = 1) {
    Tape tape;
    std::vector<Var> leaves;
    for (auto& t : inputs) leaves.push_back(tape.leaf(t));
    Var loss = f(tape, leaves);
    tape.backward(loss);
    std::vector<Tensor> analytic;
    for (auto& l : leaves) analytic.push_back(tape.grad(l));

    auto eval = [&]() {
        Tape t2;
        std::vector<Var> ls;
        for (auto& t : inputs) ls.push_back(t2.constant(t));
        return f(t2, ls).value()[0];
    };

    Rng rng(seed);
    std::vector<Samples> all;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        Samples s{"input" + std::to_string(k), {}, {}, norm(analytic[k])};
        for (auto i : pick_coords(inputs[k].numel(), max_coords, rng)) {
            const double orig = inputs[k][i];
            inputs[k][i] = orig + h;
            const double fp = eval();
            inputs[k][i] = orig - h;
            const double fm = eval();
            inputs[k][i] = orig;
            s.n.push_back((fp - fm) / (2.0 * h));
            s.a.push_back(analytic[k][i]);
        }
        all.push_back(std::move(s));
    }
    return summarize(all);
}

using ParamFn = std::function<Var(Tape&)>;

/// Differentiates f with respect to every parameter of `store` (a sample of
/// coordinates for large tensors).
inline GradCheckReport check_params(const ParamFn& f, ParamStore& store, double h = 1e-5,
                                    std::size_t max_coords = 6, std::uint64_t seed = 1) {
    store.zero_grad();
    {
        Tape tape;
        Var loss = f(tape);
        tape.backward(loss);
    }
    auto eval = [&]() {
        Tape t2;
        return f(t2).value()[0];
    };
    Rng rng(seed);
    std::vector<Samples> all;
    for (std::size_t p = 0; p < store.size(); ++p) {
        Parameter& par = store[p];
        Samples s{par.name, {}, {}, norm(par.grad)};
        for (auto i : pick_coords(par.value.numel(), max_coords, rng)) {
            const double orig = par.value[i];
            par.value[i] = orig + h;
            const double fp = eval();
            par.value[i] = orig - h;
            const double fm = eval();
            par.value[i] = orig;
            s.n.push_back((fp - fm) / (2.0 * h));
            s.a.push_back(par.grad[i]);
        }
        all.push_back(std::move(s));
    }
    return summarize(all);
}

/// sum(y * weights) with fixed random weights, turning any op into a scalar probe.
inline Var probe(Tape& t, Var y, std::uint64_t seed) {
    return ag::sum(ag::mul(y, t.constant(rng_randn(y.shape(), seed))));
}

}  // namespace rdv2::testing
