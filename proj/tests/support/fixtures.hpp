#pragma once

#include <string>

#include "rdv2/autograd.hpp"
#include "rdv2/rng.hpp"

namespace rdv2::testing {

inline bool ends_with(const std::string& s, const std::string& tail) {
    return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}

// Replaces every parameter with small random values so zero-initialized
// heads and gates stop hiding gradient paths. Attention scales stay near 1.
inline void perturb_params(ParamStore& store, std::uint64_t seed, double scale = 0.3) {
    Rng rng(seed);
    for (std::size_t i = 0; i < store.size(); ++i) {
        Parameter& p = store[i];
        const bool is_sigma = ends_with(p.name, ".sigma");
        for (auto& v : p.value.data()) v = is_sigma ? 1.0 + rng.uniform(-0.3, 0.3) : rng.uniform(-scale, scale);
    }
}

}  // namespace rdv2::testing
