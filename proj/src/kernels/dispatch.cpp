#include <atomic>
#include <cstdlib>
#include <cstring>

#include "asmflow/kernels.hpp"

namespace asmflow::kernels {
namespace {

bool detect_avx2() noexcept {
#if defined(ASMFLOW_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() noexcept {
  if (const char* env = std::getenv("ASMFLOW_SIMD"); env && std::strcmp(env, "scalar") == 0)
    return Isa::scalar;
  return detect_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() noexcept {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept {
  return isa == Isa::avx2 ? "avx2" : "scalar";
}

bool avx2_available() noexcept {
  static const bool ok = detect_avx2();
  return ok;
}

Isa active_isa() noexcept { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) noexcept {
  if (isa == Isa::avx2 && !avx2_available()) isa = Isa::scalar;
  current().store(isa, std::memory_order_relaxed);
}

template <typename T>
const KernelTable<T>& table_for(Isa isa) noexcept {
#if defined(ASMFLOW_HAVE_AVX2)
  if (isa == Isa::avx2 && avx2_available()) return avx2::table<T>();
#else
  (void)isa;
#endif
  return scalar::table<T>();
}

template const KernelTable<float>& table_for<float>(Isa) noexcept;
template const KernelTable<double>& table_for<double>(Isa) noexcept;

}  // namespace asmflow::kernels
