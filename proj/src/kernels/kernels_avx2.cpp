// AVX2/FMA variants. This translation unit is compiled with -mavx2 -mfma and
// is only reached through the runtime dispatch in dispatch.cpp.

#include <immintrin.h>

#include <vector>

#include "asmflow/kernels.hpp"

namespace asmflow::kernels::avx2 {
namespace {

template <typename T>
struct Simd;

template <>
struct Simd<float> {
  using V = __m256;
  static constexpr std::size_t W = 8;
  static V zero() { return _mm256_setzero_ps(); }
  static V load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, V v) { _mm256_storeu_ps(p, v); }
  static V set1(float x) { return _mm256_set1_ps(x); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
  static V add(V a, V b) { return _mm256_add_ps(a, b); }
  static float hsum(V v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    __m128 s = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, s);
    s = _mm_add_ss(s, sh);
    return _mm_cvtss_f32(s);
  }
};

template <>
struct Simd<double> {
  using V = __m256d;
  static constexpr std::size_t W = 4;
  static V zero() { return _mm256_setzero_pd(); }
  static V load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, V v) { _mm256_storeu_pd(p, v); }
  static V set1(double x) { return _mm256_set1_pd(x); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
  static V add(V a, V b) { return _mm256_add_pd(a, b); }
  static double hsum(V v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d h = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, h));
  }
};

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  using S = Simd<T>;
  constexpr std::size_t W = S::W;
  auto s0 = S::zero(), s1 = S::zero(), s2 = S::zero(), s3 = S::zero();
  std::size_t i = 0;
  for (; i + 4 * W <= n; i += 4 * W) {
    s0 = S::fma(S::load(a + i), S::load(b + i), s0);
    s1 = S::fma(S::load(a + i + W), S::load(b + i + W), s1);
    s2 = S::fma(S::load(a + i + 2 * W), S::load(b + i + 2 * W), s2);
    s3 = S::fma(S::load(a + i + 3 * W), S::load(b + i + 3 * W), s3);
  }
  for (; i + W <= n; i += W) s0 = S::fma(S::load(a + i), S::load(b + i), s0);
  T s = S::hsum(S::add(S::add(s0, s1), S::add(s2, s3)));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  using S = Simd<T>;
  constexpr std::size_t W = S::W;
  const auto av = S::set1(alpha);
  std::size_t i = 0;
  for (; i + W <= n; i += W) S::store(y + i, S::fma(av, S::load(x + i), S::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Register-blocked C (+)= A * B where the A element for (row i, depth p) is
// a[i * ars + p * aps]. Covers both nn (ars = lda, aps = 1) and tn
// (ars = 1, aps = lda).
template <typename T>
void gemm_strided_a(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t ars,
                    std::size_t aps, const T* b, std::size_t ldb, T* c, std::size_t ldc, bool acc) {
  using S = Simd<T>;
  using V = typename S::V;
  constexpr std::size_t W = S::W;
  constexpr std::size_t MR = 4;

  std::size_t i = 0;
  for (; i + MR <= m; i += MR) {
    const T* a0 = a + (i + 0) * ars;
    const T* a1 = a + (i + 1) * ars;
    const T* a2 = a + (i + 2) * ars;
    const T* a3 = a + (i + 3) * ars;
    std::size_t j = 0;
    for (; j + 2 * W <= n; j += 2 * W) {
      V c00 = S::zero(), c01 = S::zero(), c10 = S::zero(), c11 = S::zero();
      V c20 = S::zero(), c21 = S::zero(), c30 = S::zero(), c31 = S::zero();
      for (std::size_t p = 0; p < k; ++p) {
        const T* bp = b + p * ldb + j;
        const V b0 = S::load(bp);
        const V b1 = S::load(bp + W);
        V av = S::set1(a0[p * aps]);
        c00 = S::fma(av, b0, c00);
        c01 = S::fma(av, b1, c01);
        av = S::set1(a1[p * aps]);
        c10 = S::fma(av, b0, c10);
        c11 = S::fma(av, b1, c11);
        av = S::set1(a2[p * aps]);
        c20 = S::fma(av, b0, c20);
        c21 = S::fma(av, b1, c21);
        av = S::set1(a3[p * aps]);
        c30 = S::fma(av, b0, c30);
        c31 = S::fma(av, b1, c31);
      }
      T* cr[MR] = {c + (i + 0) * ldc + j, c + (i + 1) * ldc + j, c + (i + 2) * ldc + j,
                   c + (i + 3) * ldc + j};
      V out[MR][2] = {{c00, c01}, {c10, c11}, {c20, c21}, {c30, c31}};
      for (std::size_t r = 0; r < MR; ++r) {
        if (acc) {
          out[r][0] = S::add(out[r][0], S::load(cr[r]));
          out[r][1] = S::add(out[r][1], S::load(cr[r] + W));
        }
        S::store(cr[r], out[r][0]);
        S::store(cr[r] + W, out[r][1]);
      }
    }
    for (; j + W <= n; j += W) {
      V c0 = S::zero(), c1 = S::zero(), c2 = S::zero(), c3 = S::zero();
      for (std::size_t p = 0; p < k; ++p) {
        const V b0 = S::load(b + p * ldb + j);
        c0 = S::fma(S::set1(a0[p * aps]), b0, c0);
        c1 = S::fma(S::set1(a1[p * aps]), b0, c1);
        c2 = S::fma(S::set1(a2[p * aps]), b0, c2);
        c3 = S::fma(S::set1(a3[p * aps]), b0, c3);
      }
      V out[MR] = {c0, c1, c2, c3};
      for (std::size_t r = 0; r < MR; ++r) {
        T* cp = c + (i + r) * ldc + j;
        if (acc) out[r] = S::add(out[r], S::load(cp));
        S::store(cp, out[r]);
      }
    }
    for (; j < n; ++j) {
      T s[MR] = {0, 0, 0, 0};
      for (std::size_t p = 0; p < k; ++p) {
        const T bv = b[p * ldb + j];
        s[0] += a0[p * aps] * bv;
        s[1] += a1[p * aps] * bv;
        s[2] += a2[p * aps] * bv;
        s[3] += a3[p * aps] * bv;
      }
      for (std::size_t r = 0; r < MR; ++r) {
        T& cv = c[(i + r) * ldc + j];
        cv = acc ? cv + s[r] : s[r];
      }
    }
  }
  for (; i < m; ++i) {
    const T* ai = a + i * ars;
    std::size_t j = 0;
    for (; j + W <= n; j += W) {
      V c0 = S::zero();
      for (std::size_t p = 0; p < k; ++p) c0 = S::fma(S::set1(ai[p * aps]), S::load(b + p * ldb + j), c0);
      T* cp = c + i * ldc + j;
      if (acc) c0 = S::add(c0, S::load(cp));
      S::store(cp, c0);
    }
    for (; j < n; ++j) {
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p * aps] * b[p * ldb + j];
      T& cv = c[i * ldc + j];
      cv = acc ? cv + s : s;
    }
  }
}

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
             const T* b, std::size_t ldb, T* c, std::size_t ldc, bool acc) {
  gemm_strided_a(m, n, k, a, lda, 1, b, ldb, c, ldc, acc);
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
             const T* b, std::size_t ldb, T* c, std::size_t ldc, bool acc) {
  gemm_strided_a(m, n, k, a, 1, lda, b, ldb, c, ldc, acc);
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
             const T* b, std::size_t ldb, T* c, std::size_t ldc, bool acc) {
  if (n < Simd<T>::W) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        T s = dot(a + i * lda, b + j * ldb, k);
        c[i * ldc + j] = acc ? c[i * ldc + j] + s : s;
      }
    return;
  }
  // Pack B^T (k x n) so the row-broadcast kernel applies.
  thread_local std::vector<T> packed;
  packed.resize(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) packed[p * n + j] = b[j * ldb + p];
  gemm_strided_a(m, n, k, a, lda, 1, packed.data(), n, c, ldc, acc);
}

template <typename T>
constexpr KernelTable<T> kTable{&dot<T>, &axpy<T>, &gemm_nn<T>, &gemm_nt<T>, &gemm_tn<T>};

}  // namespace

template <typename T>
const KernelTable<T>& table() noexcept {
  return kTable<T>;
}

template const KernelTable<float>& table<float>() noexcept;
template const KernelTable<double>& table<double>() noexcept;

}  // namespace asmflow::kernels::avx2
