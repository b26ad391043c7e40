#include <algorithm>
#include <cmath>
#include <numbers>
#include <cstdio>
#include <functional>
#include <numeric>

#include "asmflow/data.hpp"
#include "asmflow/error.hpp"

namespace asmflow::data {

ShapeFamily parse_family(const std::string& name) {
  if (name == "composite") return ShapeFamily::composite;
  if (name == "cube") return ShapeFamily::cube;
  throw Error(Errc::InvalidConfig, "unknown shape family '" + name + "'");
}

std::string family_name(ShapeFamily f) { return f == ShapeFamily::cube ? "cube" : "composite"; }

namespace {

using Vec3 = Eigen::Vector3d;

Vec3 unit_vector(lie::Rng& rng) {
  std::normal_distribution<double> n01;
  Vec3 v;
  do v = Vec3(n01(rng), n01(rng), n01(rng));
  while (v.norm() < 1e-9);
  return v.normalized();
}

// A primitive surface with an area and a point sampler.
struct Surface {
  double area;
  std::function<Vec3(lie::Rng&)> sample;
};

Surface ellipsoid(const Vec3& axes, const Vec3& center) {
  // Thomsen's approximation of the surface area.
  const double p = 1.6075;
  const double a = std::pow(axes.x(), p), b = std::pow(axes.y(), p), c = std::pow(axes.z(), p);
  const double area = 4 * std::numbers::pi * std::pow((a * b + a * c + b * c) / 3, 1 / p);
  return {area, [=](lie::Rng& rng) { return Vec3(center + axes.cwiseProduct(unit_vector(rng))); }};
}

Surface box(const Vec3& half, const Eigen::Matrix3d& rot, const Vec3& center) {
  const double ax = 4 * half.y() * half.z(), ay = 4 * half.x() * half.z(), az = 4 * half.x() * half.y();
  return {2 * (ax + ay + az), [=](lie::Rng& rng) {
            std::uniform_real_distribution<double> u(-1.0, 1.0), pick(0.0, ax + ay + az);
            Vec3 q(u(rng), u(rng), u(rng));
            const double s = pick(rng);
            const int face = s < ax ? 0 : (s < ax + ay ? 1 : 2);
            q(face) = u(rng) < 0 ? -1.0 : 1.0;
            return Vec3(center + rot * half.cwiseProduct(q));
          }};
}

Surface cylinder(double radius, double height, const Eigen::Matrix3d& rot, const Vec3& center) {
  const double side = 2 * std::numbers::pi * radius * height, cap = std::numbers::pi * radius * radius;
  return {side + 2 * cap, [=](lie::Rng& rng) {
            std::uniform_real_distribution<double> u(0.0, 1.0);
            const double phi = 2 * std::numbers::pi * u(rng);
            Vec3 q;
            if (u(rng) * (side + 2 * cap) < side) {
              q = Vec3(radius * std::cos(phi), radius * std::sin(phi), height * (u(rng) - 0.5));
            } else {
              const double r = radius * std::sqrt(u(rng));
              q = Vec3(r * std::cos(phi), r * std::sin(phi), u(rng) < 0.5 ? -height / 2 : height / 2);
            }
            return Vec3(center + rot * q);
          }};
}

PointCloud sample_surfaces(const std::vector<Surface>& parts, std::size_t n, lie::Rng& rng) {
  std::vector<double> w;
  for (const auto& s : parts) w.push_back(s.area);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  PointCloud out(3, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) out.col(static_cast<Eigen::Index>(i)) = parts[pick(rng)].sample(rng);
  return out;
}

}  // namespace

PointCloud sample_shape(ShapeFamily family, std::size_t points, lie::Rng& rng) {
  if (points == 0) throw Error(Errc::InvalidConfig, "a shape needs points");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  std::vector<Surface> parts;
  if (family == ShapeFamily::cube) {
    parts.push_back(box(Vec3::Constant(0.5), Eigen::Matrix3d::Identity(), Vec3::Zero()));
    parts.push_back(ellipsoid(Vec3::Constant(0.15), Vec3::Constant(0.5)));
  } else {
    // Three primitives at non-coplanar offsets so no rigid symmetry survives.
    parts.push_back(ellipsoid(Vec3(range(0.45, 0.7), range(0.3, 0.45), range(0.2, 0.3)), Vec3::Zero()));
    parts.push_back(box(Vec3(range(0.15, 0.3), range(0.1, 0.2), range(0.1, 0.25)), lie::haar_rotation(rng).matrix(),
                        Vec3(range(0.5, 0.7), range(0.2, 0.35), range(0.0, 0.1))));
    parts.push_back(cylinder(range(0.08, 0.15), range(0.5, 0.8), lie::haar_rotation(rng).matrix(),
                             Vec3(range(-0.5, -0.3), range(0.3, 0.5), range(0.25, 0.4))));
  }
  PointCloud pts = sample_surfaces(parts, points, rng);
  pts.colwise() -= centroid(pts);
  const double r = pts.colwise().norm().maxCoeff();
  if (r > 0) pts /= r;
  return pts;
}

std::vector<std::vector<std::size_t>> cut_pieces(const PointCloud& pts, std::size_t n, const SyntheticParams& params,
                                                 lie::Rng& rng) {
  if (n < 2) throw Error(Errc::InvalidConfig, "an assembly needs at least two pieces");
  const std::size_t total = static_cast<std::size_t>(pts.cols());
  std::normal_distribution<double> jitter(0.0, 0.15);
  for (int attempt = 0; attempt < params.max_cut_attempts; ++attempt) {
    std::vector<std::vector<std::size_t>> parts(1, std::vector<std::size_t>(total));
    std::iota(parts[0].begin(), parts[0].end(), std::size_t{0});
    bool ok = true;
    while (ok && parts.size() < n) {
      const auto largest = std::max_element(parts.begin(), parts.end(),
                                            [](const auto& a, const auto& b) { return a.size() < b.size(); });
      const std::vector<std::size_t> src = std::move(*largest);
      parts.erase(largest);
      Vec3 c = Vec3::Zero();
      double spread = 0;
      for (auto i : src) c += pts.col(static_cast<Eigen::Index>(i));
      c /= static_cast<double>(src.size());
      for (auto i : src) spread += (pts.col(static_cast<Eigen::Index>(i)) - c).squaredNorm();
      spread = std::sqrt(spread / static_cast<double>(src.size()));
      const Vec3 normal = unit_vector(rng);
      const double offset = normal.dot(c) + jitter(rng) * spread;
      std::vector<std::size_t> a, b;
      for (auto i : src) (normal.dot(pts.col(static_cast<Eigen::Index>(i))) < offset ? a : b).push_back(i);
      ok = a.size() >= params.min_piece_points && b.size() >= params.min_piece_points;
      parts.push_back(std::move(a));
      parts.push_back(std::move(b));
    }
    if (!ok) continue;
    if (std::all_of(parts.begin(), parts.end(), [&](const auto& p) { return p.size() <= params.max_piece_points; }))
      return parts;
  }
  throw Error(Errc::DegenerateCut, "no cut into " + std::to_string(n) + " pieces within the size bounds");
}

AssemblyRecord make_record(const PointCloud& pts, const std::vector<std::vector<std::size_t>>& parts, lie::Rng& rng) {
  AssemblyRecord rec;
  std::vector<Vec3> cent;
  for (const auto& part : parts) {
    if (part.empty()) throw Error(Errc::DegenerateCut, "empty piece");
    Vec3 c = Vec3::Zero();
    for (auto i : part) c += pts.col(static_cast<Eigen::Index>(i));
    cent.push_back(c / static_cast<double>(part.size()));
  }
  Vec3 shift = Vec3::Zero();
  for (const auto& c : cent) shift += c;
  shift /= static_cast<double>(cent.size());
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const lie::Rotation r = lie::haar_rotation(rng);
    PointCloud local(3, static_cast<Eigen::Index>(parts[k].size()));
    for (std::size_t j = 0; j < parts[k].size(); ++j)
      local.col(static_cast<Eigen::Index>(j)) =
          r.matrix().transpose() * (pts.col(static_cast<Eigen::Index>(parts[k][j])) - cent[k]);
    local.colwise() -= centroid(local);
    rec.pieces.pieces.push_back(std::move(local));
    rec.gt.parts.push_back({r, cent[k] - shift});
  }
  return rec;
}

std::vector<AssemblyRecord> generate_synthetic(ShapeFamily family, std::size_t n_pieces, std::size_t count,
                                               const SyntheticParams& params, lie::Rng& rng) {
  if (n_pieces < 2 || n_pieces > 8) throw Error(Errc::InvalidConfig, "n_pieces must be in [2, 8]");
  if (params.min_piece_points * n_pieces > params.points_per_shape)
    throw Error(Errc::InvalidConfig, "points_per_shape too small for the piece bounds");
  std::vector<AssemblyRecord> out;
  for (std::size_t s = 0; s < count; ++s) {
    // Per-shape streams keep each shape independent of generation order.
    std::seed_seq seq{static_cast<std::uint64_t>(rng()), static_cast<std::uint64_t>(s)};
    lie::Rng shape_rng(seq);
    AssemblyRecord rec;
    for (int tries = 0;; ++tries) {
      try {
        const PointCloud pts = sample_shape(family, params.points_per_shape, shape_rng);
        rec = make_record(pts, cut_pieces(pts, n_pieces, params, shape_rng), shape_rng);
        break;
      } catch (const Error& e) {
        if (e.code() != Errc::DegenerateCut || tries >= 20) throw;
      }
    }
    char id[32];
    std::snprintf(id, sizeof id, "shape_%05zu", s);
    rec.shape_id = id;
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace asmflow::data
