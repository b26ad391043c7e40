#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <numbers>
#include <random>

#include "asmflow/error.hpp"
#include "asmflow/lie.hpp"
#include "doctest.h"
#include "stats.hpp"

using namespace asmflow;
using namespace asmflow::lie;

namespace {

Vec3 random_vec(Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n01(0.0, 1.0);
  return Vec3(n01(rng), n01(rng), n01(rng)) * scale;
}

Vec3 random_in_ball(Rng& rng, double radius) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec3 d = random_vec(rng).normalized();
  return d * radius * std::cbrt(u(rng));
}

GroupElementN random_group(std::size_t n, Rng& rng) {
  GroupElementN g = GroupElementN::identity(n);
  for (auto& p : g.parts) p = {haar_rotation(rng), random_vec(rng)};
  return g;
}

double max_diff(const GroupElementN& a, const GroupElementN& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    d = std::max(d, (a[i].matrix() - b[i].matrix()).cwiseAbs().maxCoeff());
  return d;
}

double max_diff(const TwistN& a, const TwistN& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    d = std::max({d, (a[i].w - b[i].w).cwiseAbs().maxCoeff(), (a[i].t - b[i].t).cwiseAbs().maxCoeff()});
  return d;
}

}  // namespace

TEST_CASE("so3_exp analytic values") {
  CHECK(so3_exp(Vec3::Zero()).matrix().isApprox(Mat3::Identity(), 0.0));
  Mat3 expect;
  expect << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK((so3_exp(Vec3(0, 0, std::numbers::pi / 2)).matrix() - expect).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((so3_log(Rotation::from_matrix(expect)) - Vec3(0, 0, std::numbers::pi / 2)).norm() < 1e-15);
  CHECK(so3_log(Rotation()).norm() == 0.0);
}

TEST_CASE("so3 exp/log round trip and agreement with angle-axis") {
  Rng rng(1);
  double worst = 0, worst_aa = 0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 w = random_in_ball(rng, kPrincipalCutoff);
    const Rotation r = so3_exp(w);
    worst = std::max(worst, (so3_log(r) - w).norm());
    const Mat3 ref = Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix();
    worst_aa = std::max(worst_aa, (r.matrix() - ref).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-9);
  CHECK(worst_aa < 1e-12);
  // Tiny angles go through the series branch.
  for (double s : {1e-3, 1e-6, 1e-10}) {
    const Vec3 w = random_vec(rng).normalized() * s;
    CHECK((so3_log(so3_exp(w)) - w).norm() < 1e-15);
  }
}

TEST_CASE("so3_log rejects angles near pi") {
  const Rotation r = so3_exp(Vec3(std::numbers::pi - 1e-8, 0, 0));
  CHECK_THROWS_AS(so3_log(r), Error);
  try {
    (void)so3_log(r);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::AngleNearPi);
  }
  // Just inside the cutoff still works.
  const Vec3 w(0, std::numbers::pi - 2e-6, 0);
  CHECK((so3_log(so3_exp(w)) - w).norm() < 1e-9);
}

TEST_CASE("se3_exp matches the 4x4 matrix exponential") {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const Twist x{random_in_ball(rng, 3.0), random_vec(rng, 2.0)};
    const Mat4 ref = x.matrix().exp();
    CHECK((se3_exp(x).matrix() - ref).cwiseAbs().maxCoeff() < 1e-12);
  }
  const Twist pure{Vec3::Zero(), Vec3(1, 2, 3)};
  CHECK(se3_exp(pure).t == Vec3(1, 2, 3));
  CHECK(se3_exp(Twist{}).matrix() == Mat4::Identity());
}

TEST_CASE("se3 exp/log round trip") {
  Rng rng(3);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const Twist x{random_in_ball(rng, kPrincipalCutoff), random_vec(rng, 2.0)};
    const Twist y = se3_log(se3_exp(x));
    worst = std::max({worst, (y.w - x.w).norm(), (y.t - x.t).norm()});
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("group operations") {
  Rng rng(4);
  const auto a = random_group(3, rng), b = random_group(3, rng), c = random_group(3, rng);
  CHECK(max_diff(compose(a, inverse(a)), GroupElementN::identity(3)) < 1e-12);
  CHECK(max_diff(compose(compose(a, b), c), compose(a, compose(b, c))) < 1e-10);
  CHECK_THROWS_AS(compose(a, random_group(2, rng)), Error);

  PieceSet x;
  for (int i = 0; i < 3; ++i) x.pieces.push_back(PointCloud::Random(3, 5));
  const PieceSet same = act_on_pieces(GroupElementN::identity(3), x);
  for (int i = 0; i < 3; ++i) CHECK(same.pieces[i] == x.pieces[i]);
  // (ab) acting equals a acting on b acting.
  const PieceSet lhs = act_on_pieces(compose(a, b), x);
  const PieceSet rhs = act_on_pieces(a, act_on_pieces(b, x));
  for (int i = 0; i < 3; ++i) CHECK((lhs.pieces[i] - rhs.pieces[i]).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("noise is reproducible and has the configured moments") {
  Rng r1(5), r2(5);
  const auto g1 = sample_noise(4, {}, r1), g2 = sample_noise(4, {}, r2);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(g1[i].r.matrix() == g2[i].r.matrix());
    CHECK(g1[i].t == g2[i].t);
  }

  Rng rng(6);
  const int n = 100000;
  const double omega = 2.5;
  Mat3 sum = Mat3::Zero();
  std::vector<double> tx;
  for (int i = 0; i < n / 2; ++i) {
    const auto g = sample_noise(2, {omega}, rng);
    for (const auto& p : g.parts) {
      sum += p.r.matrix();
      tx.push_back(p.t.x());
    }
  }
  // Each Haar entry has variance 1/3.
  const double bound = 3.0 * std::sqrt(1.0 / 3.0 / n);
  CHECK((sum / n).cwiseAbs().maxCoeff() < bound);
  CHECK(std::abs(testing::variance(tx) / omega - 1.0) < 0.05);
}

TEST_CASE("noise distribution is invariant under the group actions") {
  // Push one sample set through each action and compare marginals with an
  // independent fresh sample set.
  Rng rng(7), fresh_rng(8);
  const int n = 4000;
  const Rotation q = so3_exp(Vec3(0.3, -1.1, 0.7));
  const std::vector<Rotation> right{so3_exp(Vec3(1.0, 0.2, 0.0)), so3_exp(Vec3(0.0, -2.0, 0.5)),
                                    so3_exp(Vec3(-0.4, 0.1, 2.2))};
  const std::vector<std::size_t> sigma{2, 0, 1};
  const std::vector<Rotation> right_inv{right[0].inverse(), right[1].inverse(), right[2].inverse()};

  std::array<std::vector<double>, 3> pushed_qw, pushed_tx;
  std::vector<double> fresh_qw, fresh_tx;
  for (int i = 0; i < n; ++i) {
    const auto g = sample_noise(3, {}, rng);
    const auto f = sample_noise(3, {}, fresh_rng);
    const GroupElementN acted[3] = {right_rotate(g, right_inv), permute(g, sigma), left_rotate(q, g)};
    for (int a = 0; a < 3; ++a) {
      pushed_qw[a].push_back(acted[a][0].r.quaternion().x());
      pushed_tx[a].push_back(acted[a][0].t.y());
    }
    fresh_qw.push_back(f[0].r.quaternion().x());
    fresh_tx.push_back(f[0].t.y());
  }
  // Six tests at a family-wise level of 0.01.
  for (int a = 0; a < 3; ++a) {
    CHECK(testing::ks_two_sample(pushed_qw[a], fresh_qw).p_value > 0.01 / 6);
    CHECK(testing::ks_two_sample(pushed_tx[a], fresh_tx).p_value > 0.01 / 6);
  }
}

TEST_CASE("rotation correction: trivial cases") {
  Rng rng(9);
  const auto g0 = random_group(3, rng);
  CHECK((rotation_correction(g0, g0).matrix() - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
  const Rotation rbar = haar_rotation(rng);
  // g0 = rbar g1_tilde  =>  r* = rbar
  const auto g1t = left_rotate(rbar.inverse(), g0);
  CHECK((rotation_correction(g0, g1t).matrix() - rbar.matrix()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("rotation correction beats brute-force Haar search") {
  Rng rng(10);
  for (int inst = 0; inst < 3; ++inst) {
    const auto g0 = sample_noise(3, {}, rng), g1t = random_group(3, rng);
    const Rotation rs = rotation_correction(g0, g1t);
    const double best = correction_objective(rs, g0, g1t);
    double brute = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 20000; ++k) brute = std::min(brute, correction_objective(haar_rotation(rng), g0, g1t));
    CHECK(best <= brute);
    // Independent oracle: objective is stationary at r* along every axis.
    for (int ax = 0; ax < 3; ++ax) {
      const double h = 1e-4;
      const Vec3 e = Vec3::Unit(ax) * h;
      const double fp = correction_objective(so3_exp(e) * rs, g0, g1t);
      const double fm = correction_objective(so3_exp(-e) * rs, g0, g1t);
      CHECK(std::abs(fp - fm) / (2 * h) < 1e-6);
      CHECK(fp >= best);
    }
  }
}

TEST_CASE("rotation correction equivariance properties") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g0 = sample_noise(4, {}, rng), g1t = random_group(4, rng);
    const Rotation rs = rotation_correction(g0, g1t);
    std::vector<Rotation> rb;
    for (int i = 0; i < 4; ++i) rb.push_back(haar_rotation(rng));
    std::vector<Rotation> rb_inv;
    for (const auto& r : rb) rb_inv.push_back(r.inverse());
    const Rotation right = rotation_correction(right_rotate(g0, rb_inv), right_rotate(g1t, rb_inv));
    CHECK((right.matrix() - rs.matrix()).cwiseAbs().maxCoeff() < 1e-9);

    const std::vector<std::size_t> sigma{3, 1, 0, 2};
    const Rotation perm = rotation_correction(permute(g0, sigma), permute(g1t, sigma));
    CHECK((perm.matrix() - rs.matrix()).cwiseAbs().maxCoeff() < 1e-9);

    const Rotation q = haar_rotation(rng);
    const Rotation left = rotation_correction(left_rotate(q, g0), left_rotate(q, g1t));
    CHECK((left.matrix() - (q * rs * q.inverse()).matrix()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("rotation correction flags a degenerate covariance") {
  // Every part at the identity with zero translation: M = N I, all singular
  // values equal.
  const auto g = GroupElementN::identity(2);
  GroupElementN g1 = g;
  g1[0].t = Vec3::Zero();
  CHECK_THROWS_AS(rotation_correction(g, g1), Error);
  try {
    (void)rotation_correction(g, g1);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DegenerateCovariance);
  }
}

TEST_CASE("path endpoints, midpoint and derivative") {
  Rng rng(12);
  const auto g0 = sample_noise(3, {}, rng), g1t = random_group(3, rng);
  const PathPair pp = make_path_pair(g0, g1t);
  CHECK(max_diff(pp.g1, left_rotate(pp.r_star, g1t)) < 1e-12);
  CHECK(max_diff(eval_path(g0, pp.xi, 0.0), g0) < 1e-10);
  CHECK(max_diff(eval_path(g0, pp.xi, 1.0), pp.g1) < 1e-10);
  CHECK_THROWS_AS(eval_path(g0, pp.xi, 1.5), Error);
  CHECK_THROWS_AS(eval_path(g0, pp.xi, -0.1), Error);

  const PathPair same = make_path_pair(g0, g0);
  CHECK(max_diff(same.xi, TwistN::zero(3)) < 1e-12);

  // Pure translation path: midpoint is the arithmetic midpoint.
  GroupElementN a = GroupElementN::identity(2), b = a;
  a[0].t = Vec3(1, 0, 0);
  a[1].t = Vec3(0, 2, 0);
  b[0].t = Vec3(3, 0, 0);
  b[1].t = Vec3(0, 0, 2);
  TwistN xi = TwistN::zero(2);
  for (int i = 0; i < 2; ++i) xi[i] = se3_log(b[i] * a[i].inverse());
  const auto mid = eval_path(a, xi, 0.5);
  for (int i = 0; i < 2; ++i) CHECK((mid[i].t - 0.5 * (a[i].t + b[i].t)).norm() < 1e-12);

  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int k = 0; k < 10; ++k) {
    const double tau = u(rng), h = 1e-5;
    const auto hp = eval_path(g0, pp.xi, tau + h), hm = eval_path(g0, pp.xi, tau - h);
    const auto hc = eval_path(g0, pp.xi, tau);
    for (std::size_t i = 0; i < 3; ++i) {
      const Mat4 fd = (hp[i].matrix() - hm[i].matrix()) / (2 * h);
      const Mat4 an = pp.xi[i].matrix() * hc[i].matrix();
      CHECK((fd - an).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("coupled right action yields the right-translated path") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g0 = sample_noise(3, {}, rng), g1t = random_group(3, rng);
    std::vector<Rotation> r, r_inv;
    for (int i = 0; i < 3; ++i) {
      r.push_back(haar_rotation(rng));
      r_inv.push_back(r.back().inverse());
    }
    const PathPair base = make_path_pair(g0, g1t);
    const PathPair moved = make_path_pair(right_rotate(g0, r_inv), right_rotate(g1t, r_inv));
    CHECK(max_diff(moved.xi, base.xi) < 1e-9);
    for (double tau : {0.0, 0.3, 0.77, 1.0}) {
      const auto lhs = eval_path(right_rotate(g0, r_inv), moved.xi, tau);
      const auto rhs = right_rotate(eval_path(g0, base.xi, tau), r_inv);
      CHECK(max_diff(lhs, rhs) < 1e-9);
    }
  }
}

TEST_CASE("corrected samples keep an invariant target distribution") {
  // g1_tilde = q gt with Haar q; after correction the part-0 quaternion
  // marginals must match those of g1_tilde.
  Rng rng(14), rng_b(15);
  GroupElementN gt = GroupElementN::identity(3);
  gt[0] = {so3_exp(Vec3(0.2, 0.4, -0.1)), Vec3(0.5, 0, 0)};
  gt[1] = {so3_exp(Vec3(-0.7, 0.1, 0.3)), Vec3(-0.3, 0.4, 0)};
  gt[2] = {so3_exp(Vec3(0.1, -0.2, 1.3)), Vec3(-0.2, -0.4, 0.1)};
  const int n = 10000;
  std::array<std::vector<double>, 4> before, after;
  for (int i = 0; i < n; ++i) {
    const auto tilde_a = left_rotate(haar_rotation(rng), gt);
    const auto q = tilde_a[0].r.quaternion();
    before[0].push_back(q.w());
    before[1].push_back(q.x());
    before[2].push_back(q.y());
    before[3].push_back(q.z());
    const auto tilde_b = left_rotate(haar_rotation(rng_b), gt);
    const auto g0 = sample_noise(3, {}, rng_b);
    const auto g1 = left_rotate(rotation_correction(g0, tilde_b), tilde_b);
    const auto p = g1[0].r.quaternion();
    after[0].push_back(p.w());
    after[1].push_back(p.x());
    after[2].push_back(p.y());
    after[3].push_back(p.z());
  }
  for (int c = 0; c < 4; ++c) CHECK(testing::ks_two_sample(before[c], after[c]).p_value > 0.01 / 4);
}
