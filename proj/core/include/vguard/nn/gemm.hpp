#pragma once

#include <algorithm>
#include <cstddef>

namespace vguard::nn {

// Row-major matrix kernels.  Every inner loop writes contiguous,
// independent elements (outer-product accumulation), which lets the
// compiler vectorize without reassociating reductions, and every
// accumulation runs in a fixed order, so results are bitwise reproducible
// for any thread count.  Parallelism is over output rows only.

// C[M][N] (+)= A[M][K] * B[K][N]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, size_t m, size_t k, size_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(m); ++i) {
    T* ci = c + static_cast<size_t>(i) * n;
    if (!accumulate)
      for (size_t j = 0; j < n; ++j) ci[j] = T(0);
    const T* ai = a + static_cast<size_t>(i) * k;
    for (size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* bp = b + p * n;
      for (size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[M][N] (+)= A[K][M]^T * B[K][N]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, size_t m, size_t k, size_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(m); ++i) {
    T* ci = c + static_cast<size_t>(i) * n;
    if (!accumulate)
      for (size_t j = 0; j < n; ++j) ci[j] = T(0);
    for (size_t p = 0; p < k; ++p) {
      const T av = a[p * m + static_cast<size_t>(i)];
      const T* bp = b + p * n;
      for (size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// out[N][M] = in[M][N]^T
template <typename T>
void transpose(const T* in, T* out, size_t m, size_t n) {
  constexpr size_t kBlock = 32;
  for (size_t i0 = 0; i0 < m; i0 += kBlock)
    for (size_t j0 = 0; j0 < n; j0 += kBlock) {
      const size_t i1 = std::min(m, i0 + kBlock);
      const size_t j1 = std::min(n, j0 + kBlock);
      for (size_t i = i0; i < i1; ++i)
        for (size_t j = j0; j < j1; ++j) out[j * m + i] = in[i * n + j];
    }
}

}  // namespace vguard::nn
