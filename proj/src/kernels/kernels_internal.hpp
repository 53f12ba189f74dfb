// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "oliera/kernels.hpp"

namespace oliera::kernels {

#if defined(OLIERA_HAVE_AVX2)
/// Defined in avx2.cpp, which is the only translation unit built with -mavx2.
const KernelTable& avx2_table_unchecked() noexcept;
#endif

}  // namespace oliera::kernels
