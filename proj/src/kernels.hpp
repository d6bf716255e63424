// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace liftrefine::kernels {

/// C[M,N] (+)= op(A) * op(B). When trans_a, A is stored [K,M]; when trans_b,
/// B is stored [N,K]. Row-major, no aliasing between C and the inputs.
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, const double* a,
          const double* b, double* c, bool accumulate);

} // namespace liftrefine::kernels
