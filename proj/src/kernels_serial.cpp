#include <algorithm>
#include <cstddef>
#include <vector>

#include "rdv2/kernels.hpp"

namespace rdv2::kernels::serial {

#define RDV2_OMP_FOR
#include "kernels_impl.inc"
#undef RDV2_OMP_FOR

}  // namespace rdv2::kernels::serial
