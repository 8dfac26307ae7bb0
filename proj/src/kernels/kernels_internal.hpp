#pragma once

#include "synthct/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define SYNTHCT_HAVE_AVX2_KERNELS 1
#else
#define SYNTHCT_HAVE_AVX2_KERNELS 0
#endif

#if defined(__aarch64__) && defined(__ARM_NEON)
#define SYNTHCT_HAVE_NEON_KERNELS 1
#else
#define SYNTHCT_HAVE_NEON_KERNELS 0
#endif

namespace synthct::kernels {

extern const KernelTable kScalarTable;
#if SYNTHCT_HAVE_AVX2_KERNELS
extern const KernelTable kAvx2Table;
#endif
#if SYNTHCT_HAVE_NEON_KERNELS
extern const KernelTable kNeonTable;
#endif

}  // namespace synthct::kernels
