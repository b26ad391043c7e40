#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <limits>
#include <random>
#include <cmath>
#include <numbers>
#include <sstream>

#include "asmflow/error.hpp"
#include "asmflow/irreps.hpp"

namespace asmflow::irreps {
namespace {

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

// sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!)
double sh_norm(int l, int m) {
  return std::sqrt((2.0 * l + 1.0) / (4.0 * std::numbers::pi) * factorial(l - m) / factorial(l + m));
}

struct ShNorms {
  std::array<std::array<double, kMaxDegree + 1>, kMaxDegree + 1> n{};
  ShNorms() {
    for (int l = 0; l <= kMaxDegree; ++l)
      for (int m = 0; m <= l; ++m) n[l][m] = (m == 0 ? 1.0 : std::sqrt(2.0)) * sh_norm(l, m);
  }
};

const ShNorms& sh_norms() {
  static const ShNorms norms;
  return norms;
}

// Least-squares reconstruction of D^l from harmonics sampled on a fixed set
// of well-spread directions: Y(r u_k) = D Y(u_k) for all k.
struct WignerSampler {
  static constexpr int kDirs = 32;
  std::vector<Vec3> dirs;
  std::array<MatrixXd, kMaxDegree + 1> pinv;  // (2l+1) x kDirs

  WignerSampler() {
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < kDirs; ++k) {
      const double y = 1.0 - 2.0 * (k + 0.5) / kDirs;
      const double rad = std::sqrt(1.0 - y * y);
      const double phi = golden * k;
      dirs.emplace_back(rad * std::cos(phi), y, rad * std::sin(phi));
    }
    std::array<double, num_components(kMaxDegree)> buf{};
    for (int l = 0; l <= kMaxDegree; ++l) {
      MatrixXd a(kDirs, degree_dim(l));
      for (int k = 0; k < kDirs; ++k) {
        sph_harm_all(l, dirs[k], buf.data());
        for (int i = 0; i < degree_dim(l); ++i) a(k, i) = buf[degree_offset(l) + i];
      }
      pinv[l] = (a.transpose() * a).ldlt().solve(a.transpose());
    }
  }
};

const WignerSampler& wigner_sampler() {
  static const WignerSampler s;
  return s;
}

// Same reconstruction from only 2*kMaxDegree+1 directions shared by every
// degree; the subset is picked for the best worst-case conditioning.
struct PackedSampler {
  static constexpr int kDirs = 2 * kMaxDegree + 1;
  std::array<Vec3, kDirs> dirs;
  std::array<MatrixXd, kMaxDegree + 1> pinv;

  PackedSampler() {
    const auto& pool = wigner_sampler().dirs;
    std::mt19937_64 rng(12345);
    std::vector<int> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    double best = -1.0;
    std::array<double, num_components(kMaxDegree)> buf{};
    for (int trial = 0; trial < 400; ++trial) {
      std::shuffle(idx.begin(), idx.end(), rng);
      double worst = std::numeric_limits<double>::infinity();
      std::array<MatrixXd, kMaxDegree + 1> a;
      for (int l = 2; l <= kMaxDegree; ++l) {
        a[l].resize(kDirs, degree_dim(l));
        for (int k = 0; k < kDirs; ++k) {
          sph_harm_all(l, pool[idx[k]], buf.data());
          for (int i = 0; i < degree_dim(l); ++i) a[l](k, i) = buf[degree_offset(l) + i];
        }
        const Eigen::JacobiSVD<MatrixXd> svd(a[l]);
        const auto& sv = svd.singularValues();
        worst = std::min(worst, sv(sv.size() - 1) / sv(0));
      }
      if (worst > best) {
        best = worst;
        for (int k = 0; k < kDirs; ++k) dirs[k] = pool[idx[k]];
        for (int l = 2; l <= kMaxDegree; ++l)
          pinv[l] = (a[l].transpose() * a[l]).ldlt().solve(a[l].transpose());
      }
    }
  }
};

const PackedSampler& packed_sampler() {
  static const PackedSampler s;
  return s;
}

}  // namespace

void sph_harm_all(int l_max, const Vec3& dir, double* out) noexcept {
  // Standard real harmonics in the relabelled frame (x', y', z') = (z, x, y),
  // so the polar axis is y.
  const double xp = dir.z(), yp = dir.x(), zp = dir.y();
  const auto& nrm = sh_norms().n;

  // (x' + i y')^m split into real and imaginary parts.
  std::array<double, kMaxDegree + 1> cm{}, sm{};
  cm[0] = 1.0;
  sm[0] = 0.0;
  for (int m = 1; m <= l_max; ++m) {
    cm[m] = cm[m - 1] * xp - sm[m - 1] * yp;
    sm[m] = cm[m - 1] * yp + sm[m - 1] * xp;
  }

  // q[l][m] = P_l^m(z') / sin^m (no Condon-Shortley phase).
  std::array<std::array<double, kMaxDegree + 1>, kMaxDegree + 1> q{};
  double dfact = 1.0;  // (2m-1)!!
  for (int m = 0; m <= l_max; ++m) {
    if (m > 0) dfact *= (2.0 * m - 1.0);
    q[m][m] = dfact;
    if (m + 1 <= l_max) q[m + 1][m] = (2.0 * m + 1.0) * zp * q[m][m];
    for (int l = m + 2; l <= l_max; ++l)
      q[l][m] = ((2.0 * l - 1.0) * zp * q[l - 1][m] - (l + m - 1.0) * q[l - 2][m]) / (l - m);
  }

  for (int l = 0; l <= l_max; ++l) {
    double* o = out + degree_offset(l) + l;  // points at m = 0
    o[0] = nrm[l][0] * q[l][0];
    for (int m = 1; m <= l; ++m) {
      const double base = nrm[l][m] * q[l][m];
      o[m] = base * cm[m];
      o[-m] = base * sm[m];
    }
  }
}

Eigen::VectorXd sph_harm(int l, const Vec3& dir) {
  if (l < 0 || l > kMaxDegree) throw Error(Errc::SpecMismatch, "degree out of range");
  const double n = dir.norm();
  if (!(n >= 1e-12)) throw Error(Errc::ZeroDirection, "direction has zero length");
  if (std::abs(n - 1.0) > 1e-9) throw Error(Errc::ShapeMismatch, "direction is not unit length");
  std::array<double, num_components(kMaxDegree)> buf{};
  sph_harm_all(l, dir, buf.data());
  return Eigen::Map<const Eigen::VectorXd>(buf.data() + degree_offset(l), degree_dim(l));
}

MatrixXd wigner_d(int l, const lie::Rotation& r) {
  if (l < 0 || l > kMaxDegree) throw Error(Errc::SpecMismatch, "degree out of range");
  if (l == 0) return MatrixXd::Ones(1, 1);
  if (l == 1) return r.matrix();
  const auto& s = wigner_sampler();
  MatrixXd b(WignerSampler::kDirs, degree_dim(l));
  std::array<double, num_components(kMaxDegree)> buf{};
  for (int k = 0; k < WignerSampler::kDirs; ++k) {
    sph_harm_all(l, r * s.dirs[k], buf.data());
    for (int i = 0; i < degree_dim(l); ++i) b(k, i) = buf[degree_offset(l) + i];
  }
  return (s.pinv[l] * b).transpose();
}

MatrixXd wigner_d_blocks(int l_max, const lie::Rotation& r) {
  const int n = num_components(l_max);
  MatrixXd d = MatrixXd::Zero(n, n);
  for (int l = 0; l <= l_max; ++l)
    d.block(degree_offset(l), degree_offset(l), degree_dim(l), degree_dim(l)) = wigner_d(l, r);
  return d;
}

void wigner_d_packed(int l_max, const lie::Rotation& r, double* out) {
  if (l_max < 0 || l_max > kMaxDegree) throw Error(Errc::SpecMismatch, "degree out of range");
  if (l_max == 0) return;
  const lie::Mat3& m = r.matrix();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out[i * 3 + j] = m(i, j);
  if (l_max == 1) return;
  const auto& s = packed_sampler();
  constexpr int K = PackedSampler::kDirs;
  std::array<std::array<double, num_components(kMaxDegree)>, K> rotated{};
  for (int k = 0; k < K; ++k) sph_harm_all(l_max, r * s.dirs[k], rotated[k].data());
  double* o = out + 9;
  for (int l = 2; l <= l_max; ++l) {
    const int n = degree_dim(l), off = degree_offset(l);
    const MatrixXd& p = s.pinv[l];
    // D(i, j) = sum_k pinv(j, k) Y_i(r u_k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int k = 0; k < K; ++k) acc += p(j, k) * rotated[k][off + i];
        o[i * n + j] = acc;
      }
    o += n * n;
  }
}

IrrepsFeature::IrrepsFeature(IrrepsSpec spec, RowMatrixXd data) : spec_(spec), data_(std::move(data)) {
  if (data_.rows() != spec.components() || data_.cols() != spec.channels)
    throw Error(Errc::SpecMismatch, "feature data does not match its spec");
}

IrrepsFeature IrrepsFeature::rotated(const lie::Rotation& r) const {
  IrrepsFeature out(spec_);
  for (int l = 0; l <= spec_.l_max; ++l) out.block(l) = wigner_d(l, r) * block(l);
  return out;
}

EdgeFrame make_edge_frame(const Vec3& v) {
  const double n = v.norm();
  if (!(n >= 1e-12)) throw Error(Errc::ZeroDirection, "edge endpoints coincide");
  EdgeFrame e;
  e.dist = n;
  e.dir = v / n;

  auto minimal = [](const Vec3& u) {
    // Smallest rotation taking unit u to +y; valid while u.y > -1.
    const Vec3 k = u.cross(Vec3::UnitY());
    const double c = u.y();
    const lie::Mat3 kh = lie::hat(k);
    return lie::Mat3(lie::Mat3::Identity() + kh + kh * kh / (1.0 + c));
  };

  if (e.dir.y() > -0.9) {
    e.r_align = lie::Rotation::unchecked(minimal(e.dir));
  } else {
    const lie::Mat3 flip = Eigen::Vector3d(1.0, -1.0, -1.0).asDiagonal();
    e.r_align = lie::Rotation::unchecked(minimal(flip * e.dir) * flip);
  }
  return e;
}

void RadialBasis::evaluate(double dist, double* out) const noexcept {
  const int first = with_constant ? 1 : 0;
  if (with_constant) out[0] = 1.0;
  const int n = size - first;
  const double width = cutoff / n;
  for (int k = 0; k < n; ++k) {
    const double mu = cutoff * (k + 0.5) / n;
    const double z = (dist - mu) / width;
    out[first + k] = std::exp(-z * z);
  }
}

}  // namespace asmflow::irreps
