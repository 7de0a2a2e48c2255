#pragma once

#include <complex>
#include <vector>

#include "rdv2/tensor.hpp"

namespace rdv2 {

/// Real and imaginary planes of a complex tensor, each with identical shape.
struct Spectrum {
    Tensor re;
    Tensor im;
};

/// In-place 1-D transform, unnormalized in both directions. Power-of-two
/// lengths use iterative radix-2; anything else falls back to a direct DFT.
void fft1d(std::vector<std::complex<double>>& a, bool inverse);

/// 2-D transform over the last two axes of [..., H, W]; leading axes are batched.
/// Forward is unnormalized; the inverse carries the 1/(H*W) factor.
Spectrum fft2(const Tensor& x);
Spectrum fft2(const Tensor& re, const Tensor& im);
Spectrum ifft2(const Tensor& re, const Tensor& im);

}  // namespace rdv2
