#pragma once

// Dense inner loops used by the tensor engine and the message kernels.
//
// Every routine has a portable scalar reference in `kernels::scalar` and, on
// x86-64, an AVX2/FMA variant in `kernels::avx2`. The free functions in
// `kernels` dispatch through a table selected once at first use:
// AVX2 when the CPU reports avx2+fma, scalar otherwise. Setting
// ASMFLOW_SIMD=scalar in the environment pins the reference path.
//
// All matrices are row-major with explicit leading dimensions. The `acc`
// flag selects C += product (true) or C = product (false).

#include <cstddef>
#include <string_view>

namespace asmflow::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa) noexcept;

/// ISA the dispatching entry points currently route to.
Isa active_isa() noexcept;

/// True when the AVX2 variants were compiled in and the CPU supports them.
bool avx2_available() noexcept;

/// Overrides the dispatch choice. Requesting avx2 on an unsupported machine
/// falls back to scalar. Intended for tests and benchmarks.
void set_isa(Isa isa) noexcept;

template <typename T>
struct KernelTable {
  T (*dot)(const T* a, const T* b, std::size_t n);
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  // C[m,n] (+)= sum_k A[m,k] B[k,n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                  const T* b, std::size_t ldb, T* c, std::size_t ldc, bool acc);
  // C[m,n] (+)= sum_k A[m,k] B[n,k]
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                  const T* b, std::size_t ldb, T* c, std::size_t ldc, bool acc);
  // C[m,n] (+)= sum_k A[k,m] B[k,n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                  const T* b, std::size_t ldb, T* c, std::size_t ldc, bool acc);
};

namespace scalar {
template <typename T>
const KernelTable<T>& table() noexcept;
}  // namespace scalar

namespace avx2 {
// Only defined when built with ASMFLOW_HAVE_AVX2; callers go through dispatch.
template <typename T>
const KernelTable<T>& table() noexcept;
}  // namespace avx2

template <typename T>
const KernelTable<T>& table_for(Isa isa) noexcept;

template <typename T>
const KernelTable<T>& active() noexcept {
  return table_for<T>(active_isa());
}

template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  return active<T>().dot(a, b, n);
}

template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
  active<T>().axpy(alpha, x, y, n);
}

template <typename T>
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                    const T* b, std::size_t ldb, T* c, std::size_t ldc, bool acc) {
  active<T>().gemm_nn(m, n, k, a, lda, b, ldb, c, ldc, acc);
}

template <typename T>
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                    const T* b, std::size_t ldb, T* c, std::size_t ldc, bool acc) {
  active<T>().gemm_nt(m, n, k, a, lda, b, ldb, c, ldc, acc);
}

template <typename T>
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                    const T* b, std::size_t ldb, T* c, std::size_t ldc, bool acc) {
  active<T>().gemm_tn(m, n, k, a, lda, b, ldb, c, ldc, acc);
}

}  // namespace asmflow::kernels
