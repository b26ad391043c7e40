#include <cmath>
#include <random>

#include "asmflow/equiops.hpp"
#include "asmflow/error.hpp"
#include "asmflow/lie.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace asmflow;
using namespace asmflow::equinet;
using asmflow::testing::grad_check;
using asmflow::testing::random_tensor;
using asmflow::testing::TensorD;
using In = const std::vector<TensorD>&;

namespace {

std::vector<Eigen::Vector3d> random_points(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  std::vector<Eigen::Vector3d> p(n);
  for (auto& x : p) x = Eigen::Vector3d(n01(rng), n01(rng), n01(rng));
  return p;
}

EdgeCache ring_edges(const std::vector<Eigen::Vector3d>& pts, int l_max, const irreps::RadialBasis& basis) {
  std::vector<EdgeGeom> e;
  const std::size_t n = pts.size();
  for (std::size_t d = 0; d < n; ++d)
    for (std::size_t s : {(d + 1) % n, (d + 2) % n, (d + n - 1) % n})
      e.push_back({s, d, irreps::make_edge_frame(pts[d] - pts[s])});
  return EdgeCache::build(std::move(e), l_max, basis);
}

// Rotates [P, comps, c] features by the block-diagonal Wigner matrix.
TensorD rotate_features(const TensorD& f, const lie::Rotation& r) {
  const int L = static_cast<int>(std::lround(std::sqrt(static_cast<double>(f.dim(1))))) - 1;
  const Eigen::MatrixXd d = irreps::wigner_d_blocks(L, r);
  const std::size_t comps = f.dim(1), c = f.dim(2);
  std::vector<double> out(f.size());
  for (std::size_t p = 0; p < f.dim(0); ++p)
    for (std::size_t i = 0; i < comps; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0;
        for (std::size_t j = 0; j < comps; ++j)
          s += d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * f.value()[(p * comps + j) * c + ch];
        out[(p * comps + i) * c + ch] = s;
      }
  return TensorD::from(f.shape(), std::move(out));
}

double max_abs_diff(const TensorD& a, const TensorD& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.value()[i] - b.value()[i]));
  return m;
}

TensorD to_tensor(const Eigen::MatrixXd& m) {
  std::vector<double> v(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  return TensorD::from({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, std::move(v), true);
}

}  // namespace

TEST_CASE("so2_message matches the reference message kernel") {
  std::mt19937_64 rng(3);
  lie::Rng lrng(4);
  const int L = 2;
  const std::size_t c = 3, P = 7;
  irreps::RadialBasis basis{6, 3.0, true};
  const auto w = irreps::So2Weights::random({L, static_cast<int>(c)}, basis, lrng);
  const auto pts = random_points(P, rng);
  const EdgeCache cache = ring_edges(pts, L, basis);
  const TensorD f = random_tensor({P, 9, c}, rng, false);

  const TensorD out = so2_message(f, cache, to_tensor(w.mix), to_tensor(w.radial_a), to_tensor(w.radial_b));
  std::vector<irreps::MessageEdge> me;
  for (const auto& e : cache.edges) me.push_back({e.src, e.frame});
  std::vector<double> ref(cache.size() * 9 * c);
  irreps::so2_messages(f.value(), me, w, ref);
  double err = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) err = std::max(err, std::abs(ref[i] - out.value()[i]));
  CHECK(err < 1e-12);
}

TEST_CASE("so2_message is rotation equivariant") {
  std::mt19937_64 rng(5);
  lie::Rng lrng(6);
  const int L = 2;
  const std::size_t c = 4, P = 6;
  irreps::RadialBasis basis{5, 3.0};
  const auto pts = random_points(P, rng);
  const TensorD f = random_tensor({P, 9, c}, rng, false);
  const auto mix = random_tensor({3 * c, 3 * c}, rng, false), ra = random_tensor({5, 3 * c}, rng, false),
             rb = random_tensor({5, 2 * c}, rng, false);
  const auto r = lie::haar_rotation(lrng);
  std::vector<Eigen::Vector3d> rpts;
  for (const auto& p : pts) rpts.push_back(r * p);
  const auto a = so2_message(f, ring_edges(pts, L, basis), mix, ra, rb);
  const auto b = so2_message(rotate_features(f, r), ring_edges(rpts, L, basis), mix, ra, rb);
  CHECK(max_abs_diff(rotate_features(a, r), b) < 1e-10);
}

TEST_CASE("degree_linear, gelu and norm commute with rotations") {
  std::mt19937_64 rng(7);
  lie::Rng lrng(8);
  const std::size_t c = 5, P = 4;
  const TensorD f = random_tensor({P, 9, c}, rng, false);
  const TensorD w = random_tensor({3, c, c}, rng, false), ws = random_tensor({1, c, c}, rng, false);
  const TensorD sc = random_tensor({c}, rng, false);
  const auto r = lie::haar_rotation(lrng);
  const TensorD rf = rotate_features(f, r);
  CHECK(max_abs_diff(rotate_features(degree_linear(f, w), r), degree_linear(rf, w)) < 1e-12);
  CHECK(max_abs_diff(rotate_features(degree_linear(f, ws), r), degree_linear(rf, ws)) < 1e-12);
  for (auto mode : {GateMode::gate, GateMode::literal}) {
    const auto g = degree_linear(f, ws);
    CHECK(max_abs_diff(rotate_features(equivariant_gelu(f, g, mode), r),
                       equivariant_gelu(rf, degree_linear(rf, ws), mode)) < 1e-12);
  }
  CHECK(max_abs_diff(rotate_features(adaptive_norm(f, sc), r), adaptive_norm(rf, sc)) < 1e-12);
}

TEST_CASE("degree_linear agrees with a naive loop") {
  std::mt19937_64 rng(9);
  const TensorD f = random_tensor({2, 4, 3}, rng, false), w = random_tensor({2, 5, 3}, rng, false);
  const TensorD out = degree_linear(f, w);
  REQUIRE(out.shape() == tensor::Shape{2, 4, 5});
  double err = 0;
  for (std::size_t p = 0; p < 2; ++p)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t o = 0; o < 5; ++o) {
        const std::size_t l = i == 0 ? 0 : 1;
        double s = 0;
        for (std::size_t k = 0; k < 3; ++k) s += w.value()[(l * 5 + o) * 3 + k] * f.value()[(p * 4 + i) * 3 + k];
        err = std::max(err, std::abs(s - out.value()[(p * 4 + i) * 5 + o]));
      }
  CHECK(err < 1e-14);
  CHECK_THROWS_AS(degree_linear(f, random_tensor({3, 5, 3}, rng, false)), Error);
  CHECK_THROWS_AS(degree_linear(random_tensor({2, 5, 3}, rng, false), w), Error);
}

TEST_CASE("adaptive_norm normalizes each degree group") {
  std::mt19937_64 rng(10);
  const std::size_t c = 6;
  const TensorD f = random_tensor({3, 9, c}, rng, false, 5.0);
  const TensorD ones = TensorD::from({c}, std::vector<double>(c, 1.0));
  const TensorD y = adaptive_norm(f, ones);
  for (std::size_t p = 0; p < 3; ++p) {
    const double* v = y.value().data() + p * 9 * c;
    double r2 = 0, s2 = 0;
    for (std::size_t ch = 0; ch < c; ++ch) r2 += v[ch] * v[ch];
    for (std::size_t i = 1; i < 9; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) s2 += v[i * c + ch] * v[i * c + ch] / (i < 4 ? 3.0 : 5.0);
    CHECK(r2 / c == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(s2 / (2.0 * c) == doctest::Approx(1.0).epsilon(1e-10));
  }
  // All-zero features stay finite.
  const TensorD z = adaptive_norm(TensorD::zeros({1, 4, c}), ones);
  for (double v : z.value()) CHECK(v == 0.0);
}

TEST_CASE("gate mode equals F * GELU(s) / s") {
  std::mt19937_64 rng(11);
  const TensorD f = random_tensor({1, 4, 1}, rng, false), g = random_tensor({1, 4, 1}, rng, false);
  const TensorD y = equivariant_gelu(f, g, GateMode::gate);
  const TensorD yl = equivariant_gelu(f, g, GateMode::literal);
  const auto& fv = f.value();
  const auto& gv = g.value();
  const double ng = std::sqrt(gv[1] * gv[1] + gv[2] * gv[2] + gv[3] * gv[3]);
  const double s = (fv[1] * gv[1] + fv[2] * gv[2] + fv[3] * gv[3]) / ng;
  const double gel = 0.5 * s * (1 + std::erf(s / std::sqrt(2.0)));
  for (int m = 1; m < 4; ++m) {
    CHECK(y.value()[m] == doctest::Approx(fv[m] * gel / s).epsilon(1e-12));
    CHECK(yl.value()[m] == doctest::Approx(gel * gv[m] / ng).epsilon(1e-12));
  }
}

TEST_CASE("twist_head converts (w, u) into (w, u - w x c)") {
  const TensorD wu = TensorD::from({1, 3, 2}, {1, 0, 0, 2, 0, 0});
  const std::vector<Eigen::Vector3d> cs{Eigen::Vector3d(0, 0, 1)};
  const TensorD t = twist_head(wu, cs);
  const Eigen::Vector3d w(1, 0, 0), u(0, 2, 0);
  const Eigen::Vector3d expect = u - w.cross(cs[0]);
  for (int a = 0; a < 3; ++a) CHECK(t.value()[3 + a] == doctest::Approx(expect(a)));
  CHECK(t.value()[0] == 1.0);
}

TEST_CASE("finite-difference gradients of the equivariant ops") {
  std::mt19937_64 rng(12);
  irreps::RadialBasis basis{4, 3.0, true};
  const auto pts = random_points(5, rng);
  const EdgeCache cache = ring_edges(pts, 2, basis);
  const EdgeCache cache1 = ring_edges(pts, 1, basis);
  const std::vector<std::size_t> dst{0, 1, 1, 2, 0, 2, 2};
  const std::vector<std::size_t> seg{0, 0, 1, 1, 1};
  const std::vector<Eigen::Vector3d> cs{Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(-1, 0, 2)};
  struct Case {
    const char* name;
    std::function<TensorD(In)> f;
    std::vector<TensorD> inputs;
  };
  const std::size_t c = 2;
  std::vector<Case> cases = {
      {"so2_message L=2", [&](In v) { return so2_message(v[0], cache, v[1], v[2], v[3]); },
       {random_tensor({5, 9, c}, rng), random_tensor({3 * c, 3 * c}, rng), random_tensor({4, 3 * c}, rng),
        random_tensor({4, 2 * c}, rng)}},
      {"so2_message L=1", [&](In v) { return so2_message(v[0], cache1, v[1], v[2], v[3]); },
       {random_tensor({5, 4, c}, rng), random_tensor({2 * c, 2 * c}, rng), random_tensor({4, 2 * c}, rng),
        random_tensor({4, c}, rng)}},
      {"degree_linear", [](In v) { return degree_linear(v[0], v[1]); },
       {random_tensor({3, 9, 2}, rng), random_tensor({3, 4, 2}, rng)}},
      {"degree_linear shared", [](In v) { return degree_linear(v[0], v[1]); },
       {random_tensor({3, 4, 2}, rng), random_tensor({1, 3, 2}, rng)}},
      {"head_logits", [&](In v) { return head_logits(v[0], v[1], dst, 2); },
       {random_tensor({3, 4, 4}, rng), random_tensor({7, 4, 4}, rng)}},
      {"head_weighted", [&](In v) { return head_weighted(v[0], v[1], dst, 3); },
       {random_tensor({7, 2}, rng), random_tensor({7, 4, 4}, rng)}},
      {"gelu gate", [](In v) { return equivariant_gelu(v[0], v[1], GateMode::gate); },
       {random_tensor({2, 9, 3}, rng), random_tensor({2, 9, 3}, rng)}},
      {"gelu literal", [](In v) { return equivariant_gelu(v[0], v[1], GateMode::literal); },
       {random_tensor({2, 9, 3}, rng), random_tensor({2, 9, 3}, rng)}},
      {"adaptive_norm", [](In v) { return adaptive_norm(v[0], v[1]); },
       {random_tensor({2, 9, 3}, rng), random_tensor({3}, rng)}},
      {"segment_mean", [&](In v) { return segment_mean(v[0], seg, 2); }, {random_tensor({5, 3, 2}, rng)}},
      {"twist_head", [&](In v) { return twist_head(v[0], cs); }, {random_tensor({2, 3, 2}, rng)}},
  };
  for (auto& cs_ : cases) {
    CAPTURE(cs_.name);
    const auto r = grad_check(cs_.f, cs_.inputs);
    CHECK(r.analytic_norm > 0.0);
    CHECK(r.rel_error < 1e-6);
  }
}

TEST_CASE("float instantiation runs") {
  const auto f = tensor::Tensor<float>::from({1, 4, 2}, {1, 2, 3, 4, 5, 6, 7, 8}, true);
  const auto s = tensor::Tensor<float>::from({2}, {1, 1});
  tensor::Tape<float> tape;
  tensor::TapeScope<float> scope(tape);
  const auto y = adaptive_norm(equivariant_gelu(f, f, GateMode::gate), s);
  tape.backward(tensor::reduce_sum(tensor::mul(y, y)));
  for (float g : f.grad()) CHECK(std::isfinite(g));
}

TEST_CASE("segment_mean rejects empty segments") {
  const std::vector<std::size_t> seg{0, 0};
  CHECK_THROWS_AS(segment_mean(TensorD::zeros({2, 3}), seg, 2), Error);
}
