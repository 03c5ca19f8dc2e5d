#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "fiberseg/simd/kernels.hpp"

namespace fiberseg::simd {

#if defined(FIBERSEG_HAVE_AVX2)
const KernelTable& avx2_table();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(FIBERSEG_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  if (const char* env = std::getenv("FIBERSEG_ISA")) {
    const std::string want(env);
    if (want == "scalar") return Isa::kScalar;
    if (want == "avx2" && avx2_kernels() != nullptr) return Isa::kAvx2;
  }
  return detect_isa();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{&kernels_for(initial_isa())};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
  }
  return "?";
}

const KernelTable* avx2_kernels() {
#if defined(FIBERSEG_HAVE_AVX2)
  static const bool ok = cpu_has_avx2();
  return ok ? &avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

Isa detect_isa() { return avx2_kernels() != nullptr ? Isa::kAvx2 : Isa::kScalar; }

const KernelTable& kernels_for(Isa isa) {
  if (isa == Isa::kAvx2) {
    if (const KernelTable* t = avx2_kernels()) return *t;
    throw std::runtime_error("AVX2 kernels unavailable on this build or CPU");
  }
  return scalar_kernels();
}

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

void set_active_isa(Isa isa) { active_slot().store(&kernels_for(isa), std::memory_order_release); }

}  // namespace fiberseg::simd
