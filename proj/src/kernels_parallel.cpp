#include <algorithm>
#include <atomic>
#include <cstddef>
#include <vector>

#include "rdv2/kernels.hpp"

#ifdef RDV2_HAVE_OPENMP
#include <omp.h>
#define RDV2_OMP_FOR _Pragma("omp parallel for schedule(static)")
#else
#define RDV2_OMP_FOR
#endif

namespace rdv2::kernels {

namespace parallel {

#include "kernels_impl.inc"

int max_threads() {
#ifdef RDV2_HAVE_OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace parallel

namespace {
#ifdef RDV2_HAVE_OPENMP
std::atomic<bool> g_use_parallel{true};
#else
std::atomic<bool> g_use_parallel{false};
#endif
}  // namespace

bool parallel_enabled() {
#ifdef RDV2_HAVE_OPENMP
    return true;
#else
    return false;
#endif
}

void set_use_parallel(bool on) { g_use_parallel = on && parallel_enabled(); }
bool use_parallel() { return g_use_parallel; }

}  // namespace rdv2::kernels

#undef RDV2_OMP_FOR
