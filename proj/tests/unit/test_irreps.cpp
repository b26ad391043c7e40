#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include "asmflow/error.hpp"
#include "asmflow/irreps.hpp"
#include "doctest.h"

using namespace asmflow;
using namespace asmflow::irreps;

namespace {

Vec3 random_dir(lie::Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  return Vec3(n01(rng), n01(rng), n01(rng)).normalized();
}

IrrepsFeature random_feature(IrrepsSpec spec, lie::Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  IrrepsFeature f(spec);
  for (Eigen::Index i = 0; i < f.data().size(); ++i) f.data().data()[i] = n01(rng);
  return f;
}

// Independent evaluation of real harmonics from explicit Cartesian formulas
// (degrees 0..2), with y as the polar axis.
Eigen::VectorXd cartesian_sh(int l, const Vec3& d) {
  const double pi = std::numbers::pi;
  const double x = d.z(), y = d.x(), z = d.y();  // relabelled frame
  Eigen::VectorXd v(2 * l + 1);
  if (l == 0) {
    v << 0.5 / std::sqrt(pi);
  } else if (l == 1) {
    const double c = std::sqrt(3.0 / (4.0 * pi));
    v << c * y, c * z, c * x;
  } else {
    const double c = 0.5 * std::sqrt(15.0 / pi);
    v << c * x * y, c * y * z, 0.25 * std::sqrt(5.0 / pi) * (3 * z * z - 1), c * x * z, 0.5 * c * (x * x - y * y);
  }
  return v;
}

double max_abs(const MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("spherical harmonics closed forms") {
  lie::Rng rng(1);
  for (int k = 0; k < 50; ++k) {
    const Vec3 d = random_dir(rng);
    for (int l = 0; l <= 2; ++l) CHECK(max_abs(sph_harm(l, d) - cartesian_sh(l, d)) < 1e-13);
  }
  CHECK(std::abs(sph_harm(0, Vec3::UnitX())(0) - 1.0 / std::sqrt(4 * std::numbers::pi)) < 1e-15);
  // Degree 1 is proportional to the direction itself.
  const Vec3 d = random_dir(rng);
  CHECK(max_abs(sph_harm(1, d) - std::sqrt(3.0 / (4 * std::numbers::pi)) * d) < 1e-14);
}

TEST_CASE("spherical harmonics: addition theorem and orthonormality") {
  lie::Rng rng(2);
  for (int l = 0; l <= kMaxDegree; ++l) {
    const double expect = (2 * l + 1) / (4 * std::numbers::pi);
    for (int k = 0; k < 100; ++k) CHECK(std::abs(sph_harm(l, random_dir(rng)).squaredNorm() - expect) < 1e-9);
  }
  // Monte-Carlo Gram matrix on the sphere.
  const int n = 200000;
  MatrixXd gram = MatrixXd::Zero(num_components(kMaxDegree), num_components(kMaxDegree));
  Eigen::VectorXd y(num_components(kMaxDegree));
  for (int k = 0; k < n; ++k) {
    sph_harm_all(kMaxDegree, random_dir(rng), y.data());
    gram.noalias() += y * y.transpose();
  }
  gram *= 4 * std::numbers::pi / n;
  CHECK(max_abs(gram - MatrixXd::Identity(gram.rows(), gram.cols())) < 0.05);
}

TEST_CASE("spherical harmonic errors") {
  CHECK_THROWS_AS(sph_harm(1, Vec3::Zero()), Error);
  try {
    (void)sph_harm(1, Vec3::Zero());
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ZeroDirection);
  }
  CHECK_THROWS_AS(sph_harm(1, Vec3(2, 0, 0)), Error);
}

TEST_CASE("wigner-D: equivariance, homomorphism, orthogonality") {
  lie::Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto r1 = lie::haar_rotation(rng), r2 = lie::haar_rotation(rng);
    const Vec3 d = random_dir(rng);
    for (int l = 0; l <= kMaxDegree; ++l) {
      const MatrixXd d1 = wigner_d(l, r1), d2 = wigner_d(l, r2);
      CHECK(max_abs(sph_harm(l, r1 * d) - d1 * sph_harm(l, d)) < 1e-9);
      CHECK(max_abs(wigner_d(l, r1 * r2) - d1 * d2) < 1e-9);
      CHECK(max_abs(d1 * d1.transpose() - MatrixXd::Identity(2 * l + 1, 2 * l + 1)) < 1e-10);
    }
  }
  CHECK(wigner_d(0, lie::haar_rotation(rng))(0, 0) == 1.0);
  const auto r = lie::haar_rotation(rng);
  CHECK(max_abs(wigner_d(1, r) - r.matrix()) == 0.0);
}

TEST_CASE("clebsch-gordan: trivial couplings and selection rule") {
  for (int l = 0; l <= 3; ++l) {
    const auto& c = clebsch_gordan(0, l, l);
    MatrixXd m(2 * l + 1, 2 * l + 1);
    for (int b = 0; b < 2 * l + 1; ++b)
      for (int cc = 0; cc < 2 * l + 1; ++cc) m(b, cc) = c(0, b, cc);
    const double s = m(0, 0);
    CHECK(std::abs(s) > 0.1);
    CHECK(max_abs(m - s * MatrixXd::Identity(2 * l + 1, 2 * l + 1)) < 1e-12);
  }
  const auto& dotc = clebsch_gordan(1, 1, 0);
  MatrixXd m(3, 3);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) m(a, b) = dotc(a, b, 0);
  CHECK(max_abs(m - m(0, 0) * MatrixXd::Identity(3, 3)) < 1e-12);
  CHECK_THROWS_AS(clebsch_gordan(1, 1, 3), Error);
  try {
    (void)clebsch_gordan(2, 0, 1);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::SelectionRuleViolation);
  }
}

TEST_CASE("clebsch-gordan contraction is equivariant") {
  lie::Rng rng(4);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int l1 = 0; l1 <= 4; ++l1)
    for (int l2 = 0; l2 <= 2; ++l2)
      for (int l3 = std::abs(l1 - l2); l3 <= std::min(l1 + l2, 4); ++l3) {
        const auto& c = clebsch_gordan(l1, l2, l3);
        Eigen::VectorXd x(2 * l1 + 1), y(2 * l2 + 1);
        for (auto& v : x) v = n01(rng);
        for (auto& v : y) v = n01(rng);
        auto contract = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
          Eigen::VectorXd z = Eigen::VectorXd::Zero(2 * l3 + 1);
          for (int i = 0; i < a.size(); ++i)
            for (int j = 0; j < b.size(); ++j)
              for (int k = 0; k < z.size(); ++k) z(k) += c(i, j, k) * a(i) * b(j);
          return z;
        };
        const auto r = lie::haar_rotation(rng);
        const Eigen::VectorXd lhs = contract(wigner_d(l1, r) * x, wigner_d(l2, r) * y);
        const Eigen::VectorXd rhs = wigner_d(l3, r) * contract(x, y);
        CHECK(max_abs(lhs - rhs) < 1e-8);
        double norm2 = 0;
        for (double v : c.data()) norm2 += v * v;
        CHECK(norm2 > 0.5);
      }
}

TEST_CASE("edge frame maps the direction to +y") {
  lie::Rng rng(5);
  for (int k = 0; k < 1000; ++k) {
    const Vec3 v = random_dir(rng) * 1.7;
    const EdgeFrame f = make_edge_frame(v);
    CHECK((f.r_align * f.dir - Vec3::UnitY()).norm() < 1e-9);
    CHECK(f.r_align.orthogonality_defect() < 1e-12);
    CHECK(std::abs(f.dist - 1.7) < 1e-12);
  }
  for (const Vec3& v : {Vec3(0, -1, 0), Vec3(0, 1, 0), Vec3(1e-9, -1, 0)}) {
    const EdgeFrame f = make_edge_frame(v);
    CHECK((f.r_align * f.dir - Vec3::UnitY()).norm() < 1e-9);
  }
  CHECK_THROWS_AS(make_edge_frame(Vec3::Zero()), Error);
}

TEST_CASE("tensor-product paths span the SO(2)-equivariant maps") {
  for (int lo = 0; lo <= 2; ++lo)
    for (int li = 0; li <= 2; ++li) {
      const MatrixXd g = so2_path_coordinates(lo, li);
      CHECK(g.rows() == 2 * std::min(lo, li) + 1);
      CHECK(std::abs(g.determinant()) > 1e-6);
    }
  CHECK(tp_paths(2).size() == 19);
}

TEST_CASE("SO(2)-reduced and tensor-product messages agree") {
  lie::Rng rng(6);
  for (int lmax : {0, 1, 2}) {
    const IrrepsSpec spec{lmax, 5};
    const auto w = So2Weights::random(spec, {}, rng);
    const auto tp = tp_weights_from_so2(w);
    for (int k = 0; k < 30; ++k) {
      const auto f = random_feature(spec, rng);
      const auto edge = make_edge_frame(random_dir(rng) * (0.2 + 1.5 * (k % 7) / 7.0));
      const auto a = so2_reduced_message(f, edge, w), b = tp_message(f, edge, tp);
      CHECK(max_abs(a.data() - b.data()) < 1e-9 * (1.0 + max_abs(b.data())));
    }
  }
}

TEST_CASE("messages are rotation equivariant") {
  lie::Rng rng(7);
  const IrrepsSpec spec{2, 4};
  const auto w = So2Weights::random(spec, {}, rng);
  const auto tp = tp_weights_from_so2(w);
  for (int k = 0; k < 100; ++k) {
    const auto f = random_feature(spec, rng);
    const Vec3 v = random_dir(rng) * 0.9;
    const auto r = lie::haar_rotation(rng);
    const auto base = so2_reduced_message(f, make_edge_frame(v), w);
    const auto rot = so2_reduced_message(f.rotated(r), make_edge_frame(r * v), w);
    const double scale = 1.0 + max_abs(base.data());
    CHECK(max_abs(rot.data() - base.rotated(r).data()) < 1e-8 * scale);
    const auto tbase = tp_message(f, make_edge_frame(v), tp);
    const auto trot = tp_message(f.rotated(r), make_edge_frame(r * v), tp);
    CHECK(max_abs(trot.data() - tbase.rotated(r).data()) < 1e-8 * scale);
  }
}

TEST_CASE("message trivial cases") {
  lie::Rng rng(8);
  const IrrepsSpec spec{2, 3};
  const auto w = So2Weights::random(spec, {}, rng);
  const IrrepsFeature zero(spec);
  const auto edge = make_edge_frame(Vec3(0.3, 0.2, 0.1));
  CHECK(max_abs(so2_reduced_message(zero, edge, w).data()) == 0.0);
  CHECK(max_abs(tp_message(zero, edge, tp_weights_from_so2(w)).data()) == 0.0);

  // Identity frame with identity-like weights passes the feature through
  // when every coefficient is a_m = 1, b_m = 0 at the evaluated distance.
  So2Weights id{spec, RadialBasis{1, 2.0}, MatrixXd::Identity(9, 9), MatrixXd::Zero(1, 9), MatrixXd::Zero(1, 6)};
  const EdgeFrame f0 = make_edge_frame(Vec3(0, 1.0, 0));
  double phi = 0;
  id.basis.evaluate(f0.dist, &phi);
  id.radial_a.setConstant(1.0 / phi);
  const auto feat = random_feature(spec, rng);
  const auto out = so2_reduced_message(feat, f0, id);
  CHECK(max_abs(out.data() - feat.data()) < 1e-12);

  // l_max = 0: radial-weighted scalar passing.
  const IrrepsSpec s0{0, 2};
  const auto w0 = So2Weights::random(s0, {}, rng);
  const auto f = random_feature(s0, rng);
  const auto e = make_edge_frame(Vec3(0.1, -0.5, 0.2));
  std::vector<double> ph(8);
  w0.basis.evaluate(e.dist, ph.data());
  Eigen::VectorXd a(2);
  for (int ch = 0; ch < 2; ++ch) {
    a(ch) = 0;
    for (int k = 0; k < 8; ++k) a(ch) += ph[k] * w0.radial_a(k, ch);
  }
  const Eigen::VectorXd expect = w0.mix * a.cwiseProduct(f.data().row(0).transpose());
  CHECK(max_abs(so2_reduced_message(f, e, w0).data().row(0).transpose() - expect) < 1e-12);

  IrrepsFeature wrong({1, 3});
  CHECK_THROWS_AS(so2_reduced_message(wrong, edge, w), Error);
}

TEST_CASE("batched messages match single-edge evaluation across chunks") {
  lie::Rng rng(9);
  const IrrepsSpec spec{2, 3};
  const auto w = So2Weights::random(spec, {}, rng);
  const auto tp = tp_weights_from_so2(w);
  const int points = 20, edges = 600;
  std::vector<IrrepsFeature> feats;
  std::vector<double> flat;
  for (int p = 0; p < points; ++p) {
    feats.push_back(random_feature(spec, rng));
    flat.insert(flat.end(), feats.back().data().data(), feats.back().data().data() + feats.back().data().size());
  }
  std::vector<MessageEdge> list;
  std::uniform_int_distribution<int> pick(0, points - 1);
  for (int e = 0; e < edges; ++e) list.push_back({static_cast<std::size_t>(pick(rng)), make_edge_frame(random_dir(rng))});
  const std::size_t per = 9 * 3;
  std::vector<double> out_so2(edges * per), out_tp(edges * per);
  so2_messages(flat, list, w, out_so2);
  tp_messages(flat, list, tp, out_tp);
  for (int e : {0, 255, 256, 599}) {
    const auto single = so2_reduced_message(feats[list[e].src], list[e].frame, w);
    for (std::size_t i = 0; i < per; ++i) {
      CHECK(std::abs(out_so2[e * per + i] - single.data().data()[i]) < 1e-12);
      CHECK(std::abs(out_tp[e * per + i] - single.data().data()[i]) < 1e-9);
    }
  }
}

TEST_CASE("packed wigner blocks agree with the per-degree matrices") {
  lie::Rng rng(10);
  std::vector<double> packed(static_cast<std::size_t>(packed_wigner_size(kMaxDegree)));
  for (int k = 0; k < 200; ++k) {
    const auto r = lie::haar_rotation(rng);
    wigner_d_packed(kMaxDegree, r, packed.data());
    const double* p = packed.data();
    for (int l = 1; l <= kMaxDegree; ++l) {
      const MatrixXd d = wigner_d(l, r);
      const int n = 2 * l + 1;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) CHECK(std::abs(p[i * n + j] - d(i, j)) < 1e-10);
      p += n * n;
    }
  }
}
