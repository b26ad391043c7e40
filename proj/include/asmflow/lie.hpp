#pragma once

// SO(3) / SE(3) / SE(3)^N group and algebra operations.
//
// Conventions:
//  * A twist (w, t) has matrix form [[w^, t], [0, 0]]; t is the top-right
//    block of the algebra element, not the translation of its exponential.
//  * Group elements act on the left of points: g x = R x + t.
//  * Paths and integrators move states by left multiplication,
//    g <- exp(eta * xi) g, i.e. twists are right-trivialized velocities.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "asmflow/pieces.hpp"

namespace asmflow::lie {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Rng = std::mt19937_64;

/// Largest rotation angle accepted by the logarithms.
inline constexpr double kPrincipalCutoff = std::numbers::pi - 1e-6;

class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}

  /// Wraps a matrix; throws ShapeMismatch unless orthonormal with det +1
  /// within `tol`.
  static Rotation from_matrix(const Mat3& m, double tol = 1e-9);
  /// Wraps a matrix without checking; for values produced by group math.
  static Rotation unchecked(const Mat3& m) { return Rotation(m); }
  static Rotation from_quaternion(const Eigen::Quaterniond& q);

  const Mat3& matrix() const noexcept { return m_; }
  Eigen::Quaterniond quaternion() const;
  Rotation inverse() const { return Rotation(m_.transpose()); }
  /// Rotation angle in [0, pi].
  double angle() const;
  /// max(|R^T R - I|_max, |det R - 1|).
  double orthogonality_defect() const;

  Rotation operator*(const Rotation& o) const { return Rotation(m_ * o.m_); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

 private:
  explicit Rotation(const Mat3& m) : m_(m) {}
  Mat3 m_;
};

struct RigidTransform {
  Rotation r;
  Vec3 t = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  RigidTransform operator*(const RigidTransform& o) const { return {r * o.r, r * o.t + t}; }
  Vec3 operator*(const Vec3& p) const { return r * p + t; }
  RigidTransform inverse() const {
    Rotation ri = r.inverse();
    return {ri, -(ri * t)};
  }
  Mat4 matrix() const;
};

struct Twist {
  Vec3 w = Vec3::Zero();
  Vec3 t = Vec3::Zero();

  Twist operator*(double s) const { return {w * s, t * s}; }
  Twist operator+(const Twist& o) const { return {w + o.w, t + o.t}; }
  Twist operator-(const Twist& o) const { return {w - o.w, t - o.t}; }
  Mat4 matrix() const;
  bool finite() const { return w.allFinite() && t.allFinite(); }
};

/// N-tuple of rigid transforms acting piecewise on N point clouds.
struct GroupElementN {
  std::vector<RigidTransform> parts;

  static GroupElementN identity(std::size_t n) { return {std::vector<RigidTransform>(n)}; }
  std::size_t size() const noexcept { return parts.size(); }
  RigidTransform& operator[](std::size_t i) { return parts[i]; }
  const RigidTransform& operator[](std::size_t i) const { return parts[i]; }
};

struct TwistN {
  std::vector<Twist> parts;

  static TwistN zero(std::size_t n) { return {std::vector<Twist>(n)}; }
  std::size_t size() const noexcept { return parts.size(); }
  Twist& operator[](std::size_t i) { return parts[i]; }
  const Twist& operator[](std::size_t i) const { return parts[i]; }
  TwistN operator*(double s) const;
};

struct NoiseParams {
  double omega = 1.0;  // translation variance
};

Mat3 hat(const Vec3& w);
Vec3 vee(const Mat3& m);

Rotation so3_exp(const Vec3& w);
/// Principal axis-angle vector. Throws AngleNearPi beyond kPrincipalCutoff.
Vec3 so3_log(const Rotation& r);

RigidTransform se3_exp(const Twist& x);
/// Throws AngleNearPi beyond kPrincipalCutoff.
Twist se3_log(const RigidTransform& g);

GroupElementN compose(const GroupElementN& a, const GroupElementN& b);
GroupElementN inverse(const GroupElementN& a);
/// Applies g_i to every point of piece i.
PieceSet act_on_pieces(const GroupElementN& g, const PieceSet& x);

/// Diagonal left action L_r: (r g_1, ..., r g_N).
GroupElementN left_rotate(const Rotation& r, const GroupElementN& g);
/// Right action by an SO(3)^N element: (g_1 r_1, ..., g_N r_N).
GroupElementN right_rotate(const GroupElementN& g, std::span<const Rotation> r);
/// sigma g = (g_sigma(1), ..., g_sigma(N)).
GroupElementN permute(const GroupElementN& g, std::span<const std::size_t> sigma);
TwistN permute(const TwistN& x, std::span<const std::size_t> sigma);

/// exp(eta * xi_i) g_i for every part.
GroupElementN advance(const GroupElementN& g, const TwistN& xi, double eta);

Rotation haar_rotation(Rng& rng);
GroupElementN sample_noise(std::size_t n, const NoiseParams& params, Rng& rng);

struct CorrectionOptions {
  double translation_weight = 1.0;
  double min_singular_gap = 1e-9;
};

/// argmin_r sum_i |r [R~_i | t~_i] - [R0_i | t0_i]|_F^2 over SO(3).
/// Throws DegenerateCovariance when sigma_2 - sigma_3 < min_singular_gap.
Rotation rotation_correction(const GroupElementN& g0, const GroupElementN& g1_tilde,
                             const CorrectionOptions& opts = {});
/// The objective minimized by rotation_correction.
double correction_objective(const Rotation& r, const GroupElementN& g0,
                            const GroupElementN& g1_tilde, double translation_weight = 1.0);

struct PathPair {
  Rotation r_star;
  GroupElementN g1;
  TwistN xi;
};

/// g1 = r* g1_tilde and xi_i = log(g1_i g0_i^-1).
PathPair make_path_pair(const GroupElementN& g0, const GroupElementN& g1_tilde,
                        const CorrectionOptions& opts = {});

/// exp(tau xi_i) g0_i componentwise; throws TauOutOfRange outside [0, 1].
GroupElementN eval_path(const GroupElementN& g0, const TwistN& xi, double tau);

}  // namespace asmflow::lie
