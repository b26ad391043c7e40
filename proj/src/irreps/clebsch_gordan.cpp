#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <sstream>
#include <tuple>

#include "asmflow/error.hpp"
#include "asmflow/irreps.hpp"

namespace asmflow::irreps {
namespace {

using cd = std::complex<double>;

double fact(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

// <j1 m1 j2 m2 | j3 m3> (Condon-Shortley), Racah's closed form.
double complex_cg(int j1, int m1, int j2, int m2, int j3, int m3) {
  if (m1 + m2 != m3) return 0.0;
  if (std::abs(m1) > j1 || std::abs(m2) > j2 || std::abs(m3) > j3) return 0.0;
  const double pre = std::sqrt((2.0 * j3 + 1.0) * fact(j3 + j1 - j2) * fact(j3 - j1 + j2) *
                               fact(j1 + j2 - j3) / fact(j1 + j2 + j3 + 1));
  const double mass = std::sqrt(fact(j3 + m3) * fact(j3 - m3) * fact(j1 - m1) * fact(j1 + m1) *
                                fact(j2 - m2) * fact(j2 + m2));
  double sum = 0.0;
  for (int k = 0; k <= j1 + j2 + j3 + 1; ++k) {
    const int d1 = j1 + j2 - j3 - k, d2 = j1 - m1 - k, d3 = j2 + m2 - k;
    const int d4 = j3 - j2 + m1 + k, d5 = j3 - j1 - m2 + k;
    if (d1 < 0 || d2 < 0 || d3 < 0 || d4 < 0 || d5 < 0) continue;
    const double term = 1.0 / (fact(k) * fact(d1) * fact(d2) * fact(d3) * fact(d4) * fact(d5));
    sum += (k % 2 ? -term : term);
  }
  return pre * mass * sum;
}

// Real-from-complex change of basis: Y_real = U Y_complex for degree l.
// Rows are real m, columns complex mu (both -l..l).
std::vector<cd> real_basis(int l) {
  const int n = 2 * l + 1;
  std::vector<cd> u(static_cast<std::size_t>(n * n), cd(0.0, 0.0));
  const double s = 1.0 / std::sqrt(2.0);
  auto at = [&](int m, int mu) -> cd& { return u[static_cast<std::size_t>((m + l) * n + (mu + l))]; };
  at(0, 0) = 1.0;
  for (int m = 1; m <= l; ++m) {
    const double sign = (m % 2) ? -1.0 : 1.0;
    at(m, m) = sign * s;
    at(m, -m) = s;
    at(-m, -m) = cd(0.0, s);
    at(-m, m) = cd(0.0, -sign * s);
  }
  return u;
}

CouplingTensor build_real_cg(int l1, int l2, int l3) {
  const int n1 = 2 * l1 + 1, n2 = 2 * l2 + 1, n3 = 2 * l3 + 1;
  const auto u1 = real_basis(l1), u2 = real_basis(l2), u3 = real_basis(l3);
  std::vector<cd> c(static_cast<std::size_t>(n1 * n2 * n3), cd(0.0, 0.0));
  for (int a = 0; a < n1; ++a)
    for (int b = 0; b < n2; ++b)
      for (int cc = 0; cc < n3; ++cc) {
        cd s(0.0, 0.0);
        for (int mu1 = -l1; mu1 <= l1; ++mu1) {
          const cd x1 = std::conj(u1[static_cast<std::size_t>(a * n1 + mu1 + l1)]);
          if (x1 == cd(0.0, 0.0)) continue;
          for (int mu2 = -l2; mu2 <= l2; ++mu2) {
            const cd x2 = std::conj(u2[static_cast<std::size_t>(b * n2 + mu2 + l2)]);
            if (x2 == cd(0.0, 0.0)) continue;
            const int mu3 = mu1 + mu2;
            if (std::abs(mu3) > l3) continue;
            const cd x3 = u3[static_cast<std::size_t>(cc * n3 + mu3 + l3)];
            s += x3 * x1 * x2 * complex_cg(l1, mu1, l2, mu2, l3, mu3);
          }
        }
        c[static_cast<std::size_t>((a * n2 + b) * n3 + cc)] = s;
      }
  // The result carries a global phase of 1 or i depending on parity.
  double re = 0.0, im = 0.0;
  for (const auto& v : c) {
    re += v.real() * v.real();
    im += v.imag() * v.imag();
  }
  std::vector<double> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = re >= im ? c[i].real() : c[i].imag();
  return CouplingTensor(l1, l2, l3, std::move(out));
}

}  // namespace

const CouplingTensor& clebsch_gordan(int l1, int l2, int l3) {
  if (l1 < 0 || l2 < 0 || l3 < 0 || l1 > 2 * kMaxDegree || l2 > 2 * kMaxDegree ||
      l3 > 2 * kMaxDegree)
    throw Error(Errc::SpecMismatch, "coupling degree out of range");
  if (l3 < std::abs(l1 - l2) || l3 > l1 + l2) {
    std::ostringstream os;
    os << "(" << l1 << ", " << l2 << ") cannot couple to " << l3;
    throw Error(Errc::SelectionRuleViolation, os.str());
  }
  static std::mutex mu;
  static std::map<std::tuple<int, int, int>, CouplingTensor> cache;
  std::lock_guard lock(mu);
  const auto key = std::make_tuple(l1, l2, l3);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, build_real_cg(l1, l2, l3)).first;
  return it->second;
}

}  // namespace asmflow::irreps
