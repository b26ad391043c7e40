#include <cmath>
#include <random>
#include <vector>

#include "asmflow/kernels.hpp"
#include "doctest.h"

using namespace asmflow::kernels;

namespace {

template <typename T>
std::vector<T> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(u(rng));
  return v;
}

// Naive triple loop; independent of both kernel tables.
template <typename T>
void naive_gemm(char mode, std::size_t m, std::size_t n, std::size_t k, const std::vector<T>& a,
                std::size_t lda, const std::vector<T>& b, std::size_t ldb, std::vector<T>& c,
                std::size_t ldc, bool acc) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double s = acc ? c[i * ldc + j] : 0.0L;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = mode == 't' ? a[p * lda + i] : a[i * lda + p];
        const T bv = mode == 'n' ? b[j * ldb + p] : b[p * ldb + j];
        s += static_cast<long double>(av) * bv;
      }
      c[i * ldc + j] = static_cast<T>(s);
    }
}

template <typename T>
void check_table(const KernelTable<T>& tab, double tol) {
  std::mt19937_64 rng(7);
  for (std::size_t n : {1u, 3u, 7u, 8u, 16u, 17u, 64u, 129u}) {
    auto x = random_vec<T>(n, rng), y = random_vec<T>(n, rng);
    long double ref = 0;
    for (std::size_t i = 0; i < n; ++i) ref += static_cast<long double>(x[i]) * y[i];
    CHECK(std::abs(static_cast<double>(tab.dot(x.data(), y.data(), n) - static_cast<T>(ref))) < tol * n);
    auto y2 = y;
    tab.axpy(static_cast<T>(0.5), x.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(static_cast<double>(y2[i] - (y[i] + T(0.5) * x[i]))) < tol);
  }
  struct Dims {
    std::size_t m, n, k;
  };
  for (Dims d : {Dims{1, 1, 1}, Dims{3, 5, 7}, Dims{4, 16, 9}, Dims{13, 33, 17}, Dims{64, 64, 64}, Dims{5, 70, 3}}) {
    for (char mode : {'n', 'N', 't'}) {  // 'N' = nn, 'n' = nt, 't' = tn
      for (bool acc : {false, true}) {
        const std::size_t lda = (mode == 't' ? d.m : d.k) + 2, ldb = (mode == 'n' ? d.k : d.n) + 1,
                          ldc = d.n + 3;
        const std::size_t arows = mode == 't' ? d.k : d.m, brows = mode == 'n' ? d.n : d.k;
        auto a = random_vec<T>(arows * lda, rng), b = random_vec<T>(brows * ldb, rng);
        auto c = random_vec<T>(d.m * ldc, rng), ref = c;
        naive_gemm(mode, d.m, d.n, d.k, a, lda, b, ldb, ref, ldc, acc);
        if (mode == 'N')
          tab.gemm_nn(d.m, d.n, d.k, a.data(), lda, b.data(), ldb, c.data(), ldc, acc);
        else if (mode == 'n')
          tab.gemm_nt(d.m, d.n, d.k, a.data(), lda, b.data(), ldb, c.data(), ldc, acc);
        else
          tab.gemm_tn(d.m, d.n, d.k, a.data(), lda, b.data(), ldb, c.data(), ldc, acc);
        double worst = 0;
        for (std::size_t i = 0; i < d.m; ++i)
          for (std::size_t j = 0; j < d.n; ++j)
            worst = std::max(worst, std::abs(static_cast<double>(c[i * ldc + j] - ref[i * ldc + j])));
        CHECK(worst < tol * d.k);
        // Padding columns must stay untouched.
        for (std::size_t i = 0; i < d.m; ++i)
          for (std::size_t j = d.n; j < ldc; ++j) CHECK(c[i * ldc + j] == ref[i * ldc + j]);
      }
    }
  }
}

}  // namespace

TEST_CASE("scalar kernels match a naive reference") {
  check_table(scalar::table<double>(), 1e-13);
  check_table(scalar::table<float>(), 1e-5);
}

TEST_CASE("simd kernels are equivalent to the scalar reference") {
  if (!avx2_available()) {
    MESSAGE("AVX2 not available; only the scalar path is exercised");
    return;
  }
  check_table(table_for<double>(Isa::avx2), 1e-13);
  check_table(table_for<float>(Isa::avx2), 1e-5);
}

TEST_CASE("dispatch can be pinned to scalar") {
  const Isa before = active_isa();
  set_isa(Isa::scalar);
  CHECK(active_isa() == Isa::scalar);
  CHECK(&active<double>() == &scalar::table<double>());
  set_isa(before);
  CHECK(active_isa() == before);
  CHECK(isa_name(Isa::scalar) == "scalar");
}
