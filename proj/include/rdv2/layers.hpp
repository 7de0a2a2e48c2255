#pragma once

#include <string>

#include "rdv2/ag.hpp"
#include "rdv2/autograd.hpp"
#include "rdv2/rng.hpp"

namespace rdv2 {

enum class Init { uniform, zero };

/// A registered convolution: weight [out x in/groups x k x k], optional bias,
/// "same" padding for odd kernels.
struct Conv {
    Parameter* weight = nullptr;
    Parameter* bias = nullptr;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t groups = 1;

    Var operator()(Tape& t, Var x) const;
};

struct ConvSpec {
    std::size_t in = 0, out = 0, kernel = 1;
    std::size_t stride = 1, groups = 1;
    bool bias = true;
    Init init = Init::uniform;
};

/// Registers `<name>.weight` (and `<name>.bias`). Uniform init draws from
/// +-1/sqrt(fan_in) for both weight and bias.
Conv make_conv(ParamStore& store, const std::string& name, const ConvSpec& spec, Rng& rng);

/// Registers a dense matrix parameter with the same uniform rule.
Parameter& make_matrix(ParamStore& store, const std::string& name, std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace rdv2
