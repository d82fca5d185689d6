#pragma once

#include "lmlvamp/simd.hpp"

namespace lmlvamp::simd::detail {

const KernelTable& scalar_table();
#ifdef LMLVAMP_HAVE_AVX2
const KernelTable& avx2_table();
#endif

}  // namespace lmlvamp::simd::detail
