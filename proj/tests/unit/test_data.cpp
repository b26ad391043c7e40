#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "asmflow/data.hpp"
#include "asmflow/error.hpp"
#include "doctest.h"

using namespace asmflow;
using namespace asmflow::data;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("asmflow_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

lie::GroupElementN random_state(std::size_t n, lie::Rng& rng) { return lie::sample_noise(n, {}, rng); }

// Direct evaluation through 4x4 matrices.
MetricResult matrix_metric(const lie::GroupElementN& pred, const lie::GroupElementN& gt) {
  const std::size_t n = gt.size();
  double dr = 0, dt = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const Eigen::Matrix4d a = pred[i].matrix();
      const Eigen::Matrix4d b = pred[j].matrix() * gt[j].matrix().inverse() * gt[i].matrix();
      const double tr = (a.topLeftCorner<3, 3>().transpose() * b.topLeftCorner<3, 3>()).trace();
      dr += std::acos(std::clamp((tr - 1) / 2, -1.0, 1.0)) * 180 / std::numbers::pi;
      dt += (a.topRightCorner<3, 1>() - b.topRightCorner<3, 1>()).norm();
    }
  return {dr / double(n * (n - 1)), dt / double(n * (n - 1))};
}

}  // namespace

TEST_CASE("grid downsampling") {
  lie::Rng rng(1);
  const PointCloud pts = sample_shape(ShapeFamily::composite, 300, rng);
  CHECK(grid_downsample(pts, 10.0).cols() == 1);
  CHECK((grid_downsample(pts, 10.0).col(0) - centroid(pts)).norm() < 1e-12);
  CHECK(grid_downsample(pts, 0.0) == pts);
  const PointCloud g = grid_downsample(pts, 0.2);
  CHECK(g.cols() < pts.cols());
  CHECK(g.cols() > 1);
  CHECK_THROWS_AS(grid_downsample(PointCloud(3, 0), 0.1), Error);
}

TEST_CASE("pair-wise error") {
  lie::Rng rng(2);
  const auto gt = random_state(4, rng);
  const auto z = pairwise_error(gt, gt);
  CHECK(z.delta_r == 0.0);
  CHECK(z.delta_t == 0.0);

  // Two pieces whose relative pose is off by a half turn about z.
  lie::GroupElementN g2 = lie::GroupElementN::identity(2), p2 = g2;
  p2[1].r = lie::so3_exp(Eigen::Vector3d(0, 0, std::numbers::pi));
  const auto half = pairwise_error(p2, g2);
  CHECK(half.delta_r == doctest::Approx(180.0).epsilon(1e-12));
  CHECK(half.delta_t == 0.0);

  for (int trial = 0; trial < 20; ++trial) {
    const auto g = random_state(3, rng), p = random_state(3, rng);
    const auto a = pairwise_error(p, g), b = matrix_metric(p, g);
    CHECK(a.delta_r == doctest::Approx(b.delta_r).epsilon(1e-9));
    CHECK(a.delta_t == doctest::Approx(b.delta_t).epsilon(1e-9));
    CHECK(a.delta_r >= 0.0);
    CHECK(a.delta_r <= 180.0);
    // A global rigid motion of the prediction leaves the metric unchanged.
    const lie::RigidTransform m{lie::haar_rotation(rng), Eigen::Vector3d(1, -2, 0.5)};
    lie::GroupElementN moved = p;
    for (auto& x : moved.parts) x = m * x;
    const auto c = pairwise_error(moved, g);
    CHECK(std::abs(c.delta_r - a.delta_r) < 1e-9);
    CHECK(std::abs(c.delta_t - a.delta_t) < 1e-9);
  }
  CHECK_THROWS_AS(pairwise_error(random_state(2, rng), random_state(3, rng)), Error);
}

TEST_CASE("two-piece cut of a marked cube reassembles to the original points") {
  lie::Rng rng(3);
  const PointCloud pts = sample_shape(ShapeFamily::cube, 500, rng);
  SyntheticParams sp;
  sp.points_per_shape = 500;
  sp.max_piece_points = 500;
  const auto parts = cut_pieces(pts, 2, sp, rng);
  const auto rec = make_record(pts, parts, rng);
  PointCloud back = assemble(rec.pieces, rec.gt);
  // The record is a shifted copy of the input: undo the shift, then compare
  // point by point in partition order.
  Eigen::Vector3d shift = Eigen::Vector3d::Zero();
  for (const auto& part : parts) {
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (auto i : part) c += pts.col(static_cast<Eigen::Index>(i));
    shift += c / static_cast<double>(part.size());
  }
  shift /= 2.0;
  Eigen::Index o = 0;
  double err = 0;
  std::size_t count = 0;
  for (const auto& part : parts)
    for (auto i : part) {
      err = std::max(err, (back.col(o++) + shift - pts.col(static_cast<Eigen::Index>(i))).norm());
      ++count;
    }
  CHECK(count == 500);
  CHECK(err < 1e-12);
}

TEST_CASE("generated records are centered and respect the piece bounds") {
  lie::Rng rng(4);
  SyntheticParams sp;
  sp.min_piece_points = 16;
  std::size_t shapes = 0;
  for (std::size_t n : {2, 3, 5, 8}) {
    sp.points_per_shape = 40 * n;
    sp.max_piece_points = 30 * n;
    const auto recs = generate_synthetic(ShapeFamily::composite, n, 250, sp, rng);
    for (const auto& r : recs) {
      ++shapes;
      REQUIRE(r.pieces.size() == n);
      Eigen::Vector3d sum = Eigen::Vector3d::Zero();
      for (std::size_t i = 0; i < n; ++i) {
        const auto& p = r.pieces.pieces[i];
        CHECK(centroid(p).norm() < 1e-9);
        CHECK(static_cast<std::size_t>(p.cols()) >= sp.min_piece_points);
        CHECK(static_cast<std::size_t>(p.cols()) <= sp.max_piece_points);
        sum += r.gt[i] * centroid(p);
      }
      CHECK(sum.norm() < 1e-9);
    }
  }
  CHECK(shapes == 1000);
  CHECK_THROWS_AS(generate_synthetic(ShapeFamily::composite, 1, 1, sp, rng), Error);
}

TEST_CASE("generation is deterministic per seed") {
  lie::Rng a(9), b(9);
  const auto x = generate_synthetic(ShapeFamily::composite, 3, 3, {}, a);
  const auto y = generate_synthetic(ShapeFamily::composite, 3, 3, {}, b);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t i = 0; i < 3; ++i) CHECK(x[s].pieces.pieces[i] == y[s].pieces.pieces[i]);
}

TEST_CASE("xyz and manifest round trips") {
  lie::Rng rng(5);
  const fs::path dir = temp_dir("io");
  auto recs = generate_synthetic(ShapeFamily::composite, 3, 2, {}, rng);
  for (auto& r : recs) r.split = "test";
  write_dataset(dir, recs);
  const auto back = read_split(dir, "test");
  REQUIRE(back.size() == 2);
  for (std::size_t s = 0; s < 2; ++s) {
    CHECK(back[s].shape_id == recs[s].shape_id);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(back[s].pieces.pieces[i] == recs[s].pieces.pieces[i]);
      CHECK((back[s].gt[i].r.matrix() - recs[s].gt[i].r.matrix()).norm() < 1e-14);
      CHECK(back[s].gt[i].t == recs[s].gt[i].t);
    }
  }

  std::ofstream(dir / "empty.xyz").close();
  CHECK_THROWS_AS(read_xyz(dir / "empty.xyz"), Error);
  std::ofstream(dir / "bad.xyz") << "1 2 3\n4 five 6\n";
  try {
    (void)read_xyz(dir / "bad.xyz");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ParseError);
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }

  const fs::path shape = dir / "test" / recs[0].shape_id;
  std::ifstream in(shape / "manifest.json");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const auto pos = text.find("\"n_pieces\": 3");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 13, "\"n_pieces\": 4");
  std::ofstream(shape / "manifest.json") << text;
  try {
    (void)read_record(shape);
    FAIL("expected a length mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::LengthMismatch);
  }
  fs::remove_all(dir);
}
