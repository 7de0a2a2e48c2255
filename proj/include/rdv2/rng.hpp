#pragma once

#include <array>
#include <cstdint>

#include "rdv2/tensor.hpp"

namespace rdv2 {

/// xoshiro256** seeded through splitmix64. Output depends only on the seed
/// and the sequence of calls, so streams are reproducible across runs.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random mantissa bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via the Box-Muller transform; draws come in pairs.
    double normal();
    /// Uniform integer in [0, n) by rejection, unbiased.
    std::uint64_t below(std::uint64_t n);

private:
    std::array<std::uint64_t, 4> s_{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Derives an independent stream seed for (seed, stream) pairs, e.g. per training step.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

Tensor rng_randn(const Shape& shape, std::uint64_t seed);
Tensor rng_uniform(const Shape& shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0);

}  // namespace rdv2
