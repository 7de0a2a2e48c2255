#pragma once

// Inner loops for the heavy tensor operations. Every kernel exists twice:
// `serial` is the plain reference, `parallel` splits the outermost output
// axis across OpenMP threads. Each output element is accumulated by one
// thread in the same order as the serial loop, so both variants produce
// bitwise-identical results for any thread count.

#include <cstddef>

namespace rdv2::kernels {

struct ConvGeometry {
    std::size_t in_channels = 0, in_h = 0, in_w = 0;
    std::size_t out_channels = 0, out_h = 0, out_w = 0;
    std::size_t kernel_h = 0, kernel_w = 0;
    std::size_t stride = 1, padding = 0, groups = 1;

    std::size_t in_per_group() const { return in_channels / groups; }
    std::size_t out_per_group() const { return out_channels / groups; }
};

#define RDV2_KERNEL_DECLS                                                                        \
    /* c[m x n] = a[m x k] * b[k x n] */                                                         \
    void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,      \
                std::size_t n);                                                                  \
    /* out is overwritten; bias may be null */                                                   \
    void conv2d_forward(const double* in, const double* weight, const double* bias, double* out, \
                        const ConvGeometry& g);                                                  \
    /* grad_in is overwritten */                                                                 \
    void conv2d_backward_input(const double* grad_out, const double* weight, double* grad_in,    \
                               const ConvGeometry& g);                                           \
    /* grad_weight is overwritten */                                                             \
    void conv2d_backward_weight(const double* grad_out, const double* in, double* grad_weight,   \
                                const ConvGeometry& g);

namespace serial {
RDV2_KERNEL_DECLS
}

namespace parallel {
RDV2_KERNEL_DECLS
/// Worker count the parallel variants will use (1 without OpenMP).
int max_threads();
}

#undef RDV2_KERNEL_DECLS

/// True when the library was built with OpenMP.
bool parallel_enabled();

/// Runtime switch used by tests and benchmarks; defaults to parallel when available.
void set_use_parallel(bool on);
bool use_parallel();

}  // namespace rdv2::kernels
