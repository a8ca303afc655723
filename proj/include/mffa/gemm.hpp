#pragma once

#include <cstddef>

#include "mffa/common.hpp"

namespace mffa {

// Dense row-major matrix kernels. All variants accumulate into C, so callers
// zero C when they want a plain product and pass gradients directly when they
// want `grad +=`.

// C[M x N] += A[M x K] * B[K x N]
void gemm_nn(const real* a, const real* b, real* c, int m, int k, int n);

// C[M x N] += A[M x K] * B[N x K]^T
void gemm_nt(const real* a, const real* b, real* c, int m, int k, int n);

// C[M x N] += A[K x M]^T * B[K x N]
void gemm_tn(const real* a, const real* b, real* c, int m, int k, int n);

}  // namespace mffa
