#pragma once

#include "car/kernels.hpp"

namespace car::kernels::detail {

const KernelTable& scalar_table();
#if defined(CAR_HAVE_AVX2)
const KernelTable& avx2_table();
#endif

}  // namespace car::kernels::detail
