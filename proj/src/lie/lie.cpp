#include "asmflow/lie.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <sstream>

#include "asmflow/error.hpp"

namespace asmflow::lie {
namespace {

// Below this angle the trigonometric coefficients switch to Taylor series.
constexpr double kSeriesAngle = 1e-2;

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    std::ostringstream os;
    os << what << ": " << a << " vs " << b << " parts";
    throw Error(Errc::LengthMismatch, os.str());
  }
}

[[noreturn]] void throw_near_pi(double theta) {
  std::ostringstream os;
  os.precision(17);
  os << "rotation angle " << theta << " is outside the principal branch";
  throw Error(Errc::AngleNearPi, os.str());
}

}  // namespace

Rotation Rotation::from_matrix(const Mat3& m, double tol) {
  Rotation r(m);
  if (!m.allFinite() || r.orthogonality_defect() > tol)
    throw Error(Errc::ShapeMismatch, "matrix is not a rotation");
  return r;
}

Rotation Rotation::from_quaternion(const Eigen::Quaterniond& q) {
  return Rotation(q.normalized().toRotationMatrix());
}

Eigen::Quaterniond Rotation::quaternion() const {
  Eigen::Quaterniond q(m_);
  q.normalize();
  if (q.w() < 0) q.coeffs() *= -1.0;
  return q;
}

double Rotation::angle() const {
  const Vec3 s = 0.5 * vee(m_ - m_.transpose());
  const double c = 0.5 * (m_.trace() - 1.0);
  return std::atan2(s.norm(), c);
}

double Rotation::orthogonality_defect() const {
  const double ortho = (m_.transpose() * m_ - Mat3::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(m_.determinant() - 1.0));
}

Mat4 RigidTransform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = r.matrix();
  m.topRightCorner<3, 1>() = t;
  return m;
}

Mat4 Twist::matrix() const {
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<3, 3>() = hat(w);
  m.topRightCorner<3, 1>() = t;
  return m;
}

TwistN TwistN::operator*(double s) const {
  TwistN out = *this;
  for (auto& p : out.parts) p = p * s;
  return out;
}

Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return m;
}

Vec3 vee(const Mat3& m) { return Vec3(m(2, 1), m(0, 2), m(1, 0)); }

Rotation so3_exp(const Vec3& w) {
  const double th2 = w.squaredNorm();
  const double th = std::sqrt(th2);
  double a, b;  // sin(th)/th, (1 - cos(th))/th^2
  if (th < kSeriesAngle) {
    a = 1.0 - th2 / 6.0 * (1.0 - th2 / 20.0 * (1.0 - th2 / 42.0));
    b = 0.5 - th2 / 24.0 * (1.0 - th2 / 30.0 * (1.0 - th2 / 56.0));
  } else {
    a = std::sin(th) / th;
    b = (1.0 - std::cos(th)) / th2;
  }
  const Mat3 k = hat(w);
  return Rotation::unchecked(Mat3::Identity() + a * k + b * k * k);
}

Vec3 so3_log(const Rotation& rot) {
  const Mat3& r = rot.matrix();
  const Vec3 s = 0.5 * vee(r - r.transpose());  // sin(th) n
  const double c = 0.5 * (r.trace() - 1.0);
  const double sn = s.norm();
  const double th = std::atan2(sn, c);
  if (th > kPrincipalCutoff) throw_near_pi(th);

  if (th < kSeriesAngle) {
    const double th2 = th * th;
    return (1.0 + th2 / 6.0 + 7.0 * th2 * th2 / 360.0) * s;
  }
  if (th < 2.5) return (th / sn) * s;

  // Near pi the antisymmetric part is small; recover the axis from the
  // symmetric part (1 - c) n n^T and take its sign from s.
  const Mat3 b = 0.5 * (r + r.transpose()) - c * Mat3::Identity();
  Eigen::Index k;
  b.diagonal().maxCoeff(&k);
  Vec3 n = b.col(k) / std::sqrt(b(k, k) * (1.0 - c));
  n.normalize();
  if (n.dot(s) < 0) n = -n;
  return th * n;
}

RigidTransform se3_exp(const Twist& x) {
  const double th2 = x.w.squaredNorm();
  const double th = std::sqrt(th2);
  double b, c;  // (1 - cos)/th^2, (th - sin)/th^3
  if (th < kSeriesAngle) {
    b = 0.5 - th2 / 24.0 * (1.0 - th2 / 30.0 * (1.0 - th2 / 56.0));
    c = 1.0 / 6.0 - th2 / 120.0 * (1.0 - th2 / 42.0 * (1.0 - th2 / 72.0));
  } else {
    b = (1.0 - std::cos(th)) / th2;
    c = (th - std::sin(th)) / (th2 * th);
  }
  const Mat3 k = hat(x.w);
  const Mat3 v = Mat3::Identity() + b * k + c * k * k;
  return {so3_exp(x.w), v * x.t};
}

Twist se3_log(const RigidTransform& g) {
  const Vec3 w = so3_log(g.r);
  const double th2 = w.squaredNorm();
  const double th = std::sqrt(th2);
  double d;  // coefficient of W^2 in V^-1
  if (th < kSeriesAngle) {
    d = 1.0 / 12.0 + th2 / 720.0 + th2 * th2 / 30240.0;
  } else {
    d = (1.0 - th * std::sin(th) / (2.0 * (1.0 - std::cos(th)))) / th2;
  }
  const Mat3 k = hat(w);
  const Mat3 vinv = Mat3::Identity() - 0.5 * k + d * k * k;
  return {w, vinv * g.t};
}

GroupElementN compose(const GroupElementN& a, const GroupElementN& b) {
  require_same_length(a.size(), b.size(), "compose");
  GroupElementN out;
  out.parts.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out.parts.push_back(a[i] * b[i]);
  return out;
}

GroupElementN inverse(const GroupElementN& a) {
  GroupElementN out;
  out.parts.reserve(a.size());
  for (const auto& p : a.parts) out.parts.push_back(p.inverse());
  return out;
}

PieceSet act_on_pieces(const GroupElementN& g, const PieceSet& x) {
  require_same_length(g.size(), x.size(), "act_on_pieces");
  PieceSet out;
  out.pieces.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    PointCloud p = g[i].r.matrix() * x.pieces[i];
    p.colwise() += g[i].t;
    out.pieces.push_back(std::move(p));
  }
  return out;
}

GroupElementN left_rotate(const Rotation& r, const GroupElementN& g) {
  GroupElementN out = g;
  for (auto& p : out.parts) p = RigidTransform{r, Vec3::Zero()} * p;
  return out;
}

GroupElementN right_rotate(const GroupElementN& g, std::span<const Rotation> r) {
  require_same_length(g.size(), r.size(), "right_rotate");
  GroupElementN out = g;
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] * RigidTransform{r[i], Vec3::Zero()};
  return out;
}

GroupElementN permute(const GroupElementN& g, std::span<const std::size_t> sigma) {
  require_same_length(g.size(), sigma.size(), "permute");
  GroupElementN out;
  out.parts.reserve(g.size());
  for (std::size_t i : sigma) out.parts.push_back(g.parts.at(i));
  return out;
}

TwistN permute(const TwistN& x, std::span<const std::size_t> sigma) {
  require_same_length(x.size(), sigma.size(), "permute");
  TwistN out;
  out.parts.reserve(x.size());
  for (std::size_t i : sigma) out.parts.push_back(x.parts.at(i));
  return out;
}

GroupElementN advance(const GroupElementN& g, const TwistN& xi, double eta) {
  require_same_length(g.size(), xi.size(), "advance");
  GroupElementN out;
  out.parts.reserve(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out.parts.push_back(se3_exp(xi[i] * eta) * g[i]);
  return out;
}

Rotation haar_rotation(Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  // Evaluation order fixed explicitly for reproducibility.
  const double w = n01(rng);
  const double x = n01(rng);
  const double y = n01(rng);
  const double z = n01(rng);
  return Rotation::from_quaternion(Eigen::Quaterniond(w, x, y, z));
}

GroupElementN sample_noise(std::size_t n, const NoiseParams& params, Rng& rng) {
  if (n < 2) throw Error(Errc::InvalidConfig, "noise needs at least two parts");
  if (!(params.omega > 0)) throw Error(Errc::InvalidConfig, "omega must be positive");
  const double sd = std::sqrt(params.omega);
  GroupElementN g;
  g.parts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    RigidTransform p;
    p.r = haar_rotation(rng);
    std::normal_distribution<double> n01(0.0, 1.0);
    const double tx = n01(rng);
    const double ty = n01(rng);
    const double tz = n01(rng);
    p.t = sd * Vec3(tx, ty, tz);
    g.parts.push_back(p);
  }
  return g;
}

double correction_objective(const Rotation& r, const GroupElementN& g0,
                            const GroupElementN& g1_tilde, double translation_weight) {
  require_same_length(g0.size(), g1_tilde.size(), "correction_objective");
  double s = 0;
  for (std::size_t i = 0; i < g0.size(); ++i) {
    s += (r.matrix() * g1_tilde[i].r.matrix() - g0[i].r.matrix()).squaredNorm();
    s += translation_weight * (r * g1_tilde[i].t - g0[i].t).squaredNorm();
  }
  return s;
}

Rotation rotation_correction(const GroupElementN& g0, const GroupElementN& g1_tilde,
                             const CorrectionOptions& opts) {
  require_same_length(g0.size(), g1_tilde.size(), "rotation_correction");
  // Objective = const - 2 tr(r H) with H = sum R~ R0^T + w t~ t0^T.
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < g0.size(); ++i) {
    h += g1_tilde[i].r.matrix() * g0[i].r.matrix().transpose();
    h += opts.translation_weight * g1_tilde[i].t * g0[i].t.transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (sv(1) - sv(2) < opts.min_singular_gap) {
    std::ostringstream os;
    os << "singular values " << sv.transpose() << " do not separate sigma_2 and sigma_3";
    throw Error(Errc::DegenerateCovariance, os.str());
  }
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0 ? -1.0 : 1.0;
  return Rotation::unchecked(v * d * u.transpose());
}

PathPair make_path_pair(const GroupElementN& g0, const GroupElementN& g1_tilde,
                        const CorrectionOptions& opts) {
  PathPair out;
  out.r_star = rotation_correction(g0, g1_tilde, opts);
  out.g1 = left_rotate(out.r_star, g1_tilde);
  out.xi.parts.reserve(g0.size());
  for (std::size_t i = 0; i < g0.size(); ++i)
    out.xi.parts.push_back(se3_log(out.g1[i] * g0[i].inverse()));
  return out;
}

GroupElementN eval_path(const GroupElementN& g0, const TwistN& xi, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    std::ostringstream os;
    os << "tau = " << tau;
    throw Error(Errc::TauOutOfRange, os.str());
  }
  return advance(g0, xi, tau);
}

}  // namespace asmflow::lie
