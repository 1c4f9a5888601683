#pragma once
// Data-parallel float kernels used by the NN layers.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The active variant is picked once at startup from CPUID
// and can be forced with MSFCN_ISA=scalar|avx2 or set_active_isa().

#include <cstddef>
#include <string_view>

namespace msfcn::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa) noexcept;

// Best ISA the running CPU (and this build) supports.
Isa detected_isa() noexcept;

Isa active_isa() noexcept;

// Throws std::invalid_argument if the CPU cannot run `isa`.
void set_active_isa(Isa isa);

// C[m x n] (+)= A[m x k] * B[k x n], all row-major with leading dimensions.
// When accumulate is false C is overwritten.
using SgemmFn = void (*)(int m, int n, int k, const float* a, int lda,
                         const float* b, int ldb, float* c, int ldc,
                         bool accumulate);
// y += alpha * x
using SaxpyFn = void (*)(std::size_t n, float alpha, const float* x, float* y);
// y = max(x, 0)
using ReluFn = void (*)(std::size_t n, const float* x, float* y);
// v = momentum * v - lr * g; w += v
using MomentumFn = void (*)(std::size_t n, float lr, float momentum,
                            const float* g, float* v, float* w);

struct KernelTable {
  SgemmFn sgemm;
  SaxpyFn saxpy;
  ReluFn relu;
  MomentumFn momentum_step;
};

const KernelTable& kernels(Isa isa);

inline const KernelTable& active() { return kernels(active_isa()); }

namespace scalar {
void sgemm(int m, int n, int k, const float* a, int lda, const float* b,
           int ldb, float* c, int ldc, bool accumulate);
void saxpy(std::size_t n, float alpha, const float* x, float* y);
void relu(std::size_t n, const float* x, float* y);
void momentum_step(std::size_t n, float lr, float momentum, const float* g,
                   float* v, float* w);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define MSFCN_HAVE_AVX2_KERNELS 1
namespace avx2 {
void sgemm(int m, int n, int k, const float* a, int lda, const float* b,
           int ldb, float* c, int ldc, bool accumulate);
void saxpy(std::size_t n, float alpha, const float* x, float* y);
void relu(std::size_t n, const float* x, float* y);
void momentum_step(std::size_t n, float lr, float momentum, const float* g,
                   float* v, float* w);
}  // namespace avx2
#else
#define MSFCN_HAVE_AVX2_KERNELS 0
#endif

}  // namespace msfcn::simd
