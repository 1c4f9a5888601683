#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "msfcn/simd/kernels.hpp"

namespace msfcn::simd {
namespace {

constexpr KernelTable kScalarTable{&scalar::sgemm, &scalar::saxpy,
                                   &scalar::relu, &scalar::momentum_step};
#if MSFCN_HAVE_AVX2_KERNELS
constexpr KernelTable kAvx2Table{&avx2::sgemm, &avx2::saxpy, &avx2::relu,
                                 &avx2::momentum_step};
#endif

bool cpu_supports(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if MSFCN_HAVE_AVX2_KERNELS && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa initial_isa() noexcept {
  if (const char* env = std::getenv("MSFCN_ISA")) {
    const std::string requested(env);
    if (requested == "scalar") return Isa::scalar;
    if (requested == "avx2" && cpu_supports(Isa::avx2)) return Isa::avx2;
  }
  return detected_isa();
}

std::atomic<Isa>& active_slot() {
  static std::atomic<Isa> slot{initial_isa()};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept {
  return isa == Isa::avx2 ? "avx2" : "scalar";
}

Isa detected_isa() noexcept {
  return cpu_supports(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

Isa active_isa() noexcept { return active_slot().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!cpu_supports(isa)) {
    throw std::invalid_argument("ISA not supported on this CPU: " + std::string(isa_name(isa)));
  }
  active_slot().store(isa, std::memory_order_relaxed);
}

const KernelTable& kernels(Isa isa) {
#if MSFCN_HAVE_AVX2_KERNELS
  if (isa == Isa::avx2) return kAvx2Table;
#endif
  (void)isa;
  return kScalarTable;
}

}  // namespace msfcn::simd
