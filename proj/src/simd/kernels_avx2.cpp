// Compiled with -mavx2 -mfma; only reached after the CPUID check in dispatch.cpp.
#include "msfcn/simd/kernels.hpp"

#if MSFCN_HAVE_AVX2_KERNELS

#include <immintrin.h>

#include <algorithm>

namespace msfcn::simd::avx2 {
namespace {

constexpr int kBlockK = 256;

inline void kernel_4x16(int k, const float* a, int lda, const float* b,
                        int ldb, float* c, int ldc) {
  __m256 c00 = _mm256_loadu_ps(c);
  __m256 c01 = _mm256_loadu_ps(c + 8);
  __m256 c10 = _mm256_loadu_ps(c + ldc);
  __m256 c11 = _mm256_loadu_ps(c + ldc + 8);
  __m256 c20 = _mm256_loadu_ps(c + 2 * ldc);
  __m256 c21 = _mm256_loadu_ps(c + 2 * ldc + 8);
  __m256 c30 = _mm256_loadu_ps(c + 3 * ldc);
  __m256 c31 = _mm256_loadu_ps(c + 3 * ldc + 8);
  for (int p = 0; p < k; ++p) {
    const float* bp = b + static_cast<std::ptrdiff_t>(p) * ldb;
    const __m256 b0 = _mm256_loadu_ps(bp);
    const __m256 b1 = _mm256_loadu_ps(bp + 8);
    __m256 av = _mm256_broadcast_ss(a + p);
    c00 = _mm256_fmadd_ps(av, b0, c00);
    c01 = _mm256_fmadd_ps(av, b1, c01);
    av = _mm256_broadcast_ss(a + lda + p);
    c10 = _mm256_fmadd_ps(av, b0, c10);
    c11 = _mm256_fmadd_ps(av, b1, c11);
    av = _mm256_broadcast_ss(a + 2 * lda + p);
    c20 = _mm256_fmadd_ps(av, b0, c20);
    c21 = _mm256_fmadd_ps(av, b1, c21);
    av = _mm256_broadcast_ss(a + 3 * lda + p);
    c30 = _mm256_fmadd_ps(av, b0, c30);
    c31 = _mm256_fmadd_ps(av, b1, c31);
  }
  _mm256_storeu_ps(c, c00);
  _mm256_storeu_ps(c + 8, c01);
  _mm256_storeu_ps(c + ldc, c10);
  _mm256_storeu_ps(c + ldc + 8, c11);
  _mm256_storeu_ps(c + 2 * ldc, c20);
  _mm256_storeu_ps(c + 2 * ldc + 8, c21);
  _mm256_storeu_ps(c + 3 * ldc, c30);
  _mm256_storeu_ps(c + 3 * ldc + 8, c31);
}

inline void kernel_4x8(int k, const float* a, int lda, const float* b, int ldb,
                       float* c, int ldc) {
  __m256 c0 = _mm256_loadu_ps(c);
  __m256 c1 = _mm256_loadu_ps(c + ldc);
  __m256 c2 = _mm256_loadu_ps(c + 2 * ldc);
  __m256 c3 = _mm256_loadu_ps(c + 3 * ldc);
  for (int p = 0; p < k; ++p) {
    const __m256 bv = _mm256_loadu_ps(b + static_cast<std::ptrdiff_t>(p) * ldb);
    c0 = _mm256_fmadd_ps(_mm256_broadcast_ss(a + p), bv, c0);
    c1 = _mm256_fmadd_ps(_mm256_broadcast_ss(a + lda + p), bv, c1);
    c2 = _mm256_fmadd_ps(_mm256_broadcast_ss(a + 2 * lda + p), bv, c2);
    c3 = _mm256_fmadd_ps(_mm256_broadcast_ss(a + 3 * lda + p), bv, c3);
  }
  _mm256_storeu_ps(c, c0);
  _mm256_storeu_ps(c + ldc, c1);
  _mm256_storeu_ps(c + 2 * ldc, c2);
  _mm256_storeu_ps(c + 3 * ldc, c3);
}

inline void kernel_1xn(int n, int k, const float* a, const float* b, int ldb,
                       float* c) {
  int j = 0;
  for (; j + 8 <= n; j += 8) {
    __m256 acc = _mm256_loadu_ps(c + j);
    for (int p = 0; p < k; ++p) {
      acc = _mm256_fmadd_ps(_mm256_broadcast_ss(a + p),
                            _mm256_loadu_ps(b + static_cast<std::ptrdiff_t>(p) * ldb + j), acc);
    }
    _mm256_storeu_ps(c + j, acc);
  }
  for (; j < n; ++j) {
    float acc = c[j];
    for (int p = 0; p < k; ++p) acc += a[p] * b[static_cast<std::ptrdiff_t>(p) * ldb + j];
    c[j] = acc;
  }
}

}  // namespace

void sgemm(int m, int n, int k, const float* a, int lda, const float* b,
           int ldb, float* c, int ldc, bool accumulate) {
  if (!accumulate) {
    for (int i = 0; i < m; ++i) {
      std::fill(c + static_cast<std::ptrdiff_t>(i) * ldc,
                c + static_cast<std::ptrdiff_t>(i) * ldc + n, 0.0f);
    }
  }
  for (int p0 = 0; p0 < k; p0 += kBlockK) {
    const int kb = std::min(kBlockK, k - p0);
    const float* bk = b + static_cast<std::ptrdiff_t>(p0) * ldb;
    int i = 0;
    for (; i + 4 <= m; i += 4) {
      const float* ai = a + static_cast<std::ptrdiff_t>(i) * lda + p0;
      float* ci = c + static_cast<std::ptrdiff_t>(i) * ldc;
      int j = 0;
      for (; j + 16 <= n; j += 16) kernel_4x16(kb, ai, lda, bk + j, ldb, ci + j, ldc);
      for (; j + 8 <= n; j += 8) kernel_4x8(kb, ai, lda, bk + j, ldb, ci + j, ldc);
      if (j < n) {
        for (int r = 0; r < 4; ++r) {
          kernel_1xn(n - j, kb, ai + static_cast<std::ptrdiff_t>(r) * lda, bk + j, ldb,
                     ci + static_cast<std::ptrdiff_t>(r) * ldc + j);
        }
      }
    }
    for (; i < m; ++i) {
      kernel_1xn(n, kb, a + static_cast<std::ptrdiff_t>(i) * lda + p0, bk, ldb,
                 c + static_cast<std::ptrdiff_t>(i) * ldc);
    }
  }
}

void saxpy(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void relu(std::size_t n, const float* x, float* y) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void momentum_step(std::size_t n, float lr, float momentum, const float* g,
                   float* v, float* w) {
  const __m256 mv = _mm256_set1_ps(momentum);
  const __m256 lv = _mm256_set1_ps(lr);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vel = _mm256_sub_ps(_mm256_mul_ps(mv, _mm256_loadu_ps(v + i)),
                                     _mm256_mul_ps(lv, _mm256_loadu_ps(g + i)));
    _mm256_storeu_ps(v + i, vel);
    _mm256_storeu_ps(w + i, _mm256_add_ps(_mm256_loadu_ps(w + i), vel));
  }
  for (; i < n; ++i) {
    v[i] = momentum * v[i] - lr * g[i];
    w[i] += v[i];
  }
}

}  // namespace msfcn::simd::avx2

#endif
