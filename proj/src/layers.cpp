#include "rdv2/layers.hpp"

#include <cmath>

namespace rdv2 {

Var Conv::operator()(Tape& t, Var x) const {
    Var b = bias ? t.param(*bias) : Var{};
    return ag::conv2d(x, t.param(*weight), b, stride, padding, groups);
}

Conv make_conv(ParamStore& store, const std::string& name, const ConvSpec& spec, Rng& rng) {
    const std::size_t in_g = spec.in / spec.groups;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_g * spec.kernel * spec.kernel));
    Tensor w(Shape{spec.out, in_g, spec.kernel, spec.kernel});
    if (spec.init == Init::uniform)
        for (auto& v : w.data()) v = rng.uniform(-bound, bound);
    Conv c;
    c.weight = &store.add(name + ".weight", std::move(w));
    if (spec.bias) {
        Tensor b(Shape{spec.out});
        if (spec.init == Init::uniform)
            for (auto& v : b.data()) v = rng.uniform(-bound, bound);
        c.bias = &store.add(name + ".bias", std::move(b));
    }
    c.stride = spec.stride;
    c.padding = spec.kernel / 2;
    c.groups = spec.groups;
    return c;
}

Parameter& make_matrix(ParamStore& store, const std::string& name, std::size_t rows, std::size_t cols, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    Tensor w(Shape{rows, cols});
    for (auto& v : w.data()) v = rng.uniform(-bound, bound);
    return store.add(name, std::move(w));
}

}  // namespace rdv2
