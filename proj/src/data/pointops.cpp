#include <cmath>
#include <map>
#include <tuple>

#include "asmflow/data.hpp"
#include "asmflow/error.hpp"

namespace asmflow::data {

PointCloud grid_downsample(const PointCloud& pts, double cell) {
  if (pts.cols() == 0) throw Error(Errc::PieceTooSmall, "grid_downsample needs at least one point");
  if (!(cell > 0.0)) return pts;
  using Key = std::tuple<long long, long long, long long>;
  std::map<Key, std::pair<Eigen::Vector3d, int>> cells;
  // Cells are anchored at the bounding-box minimum.
  const Eigen::Vector3d lo = pts.rowwise().minCoeff();
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    const Eigen::Vector3d p = pts.col(i) - lo;
    const Key k{static_cast<long long>(std::floor(p.x() / cell)), static_cast<long long>(std::floor(p.y() / cell)),
                static_cast<long long>(std::floor(p.z() / cell))};
    auto [it, fresh] = cells.try_emplace(k, Eigen::Vector3d::Zero(), 0);
    it->second.first += pts.col(i);
    it->second.second += 1;
  }
  PointCloud out(3, static_cast<Eigen::Index>(cells.size()));
  Eigen::Index j = 0;
  for (const auto& [k, v] : cells) out.col(j++) = v.first / v.second;
  return out;
}

PointCloud assemble(const PieceSet& x, const lie::GroupElementN& g) {
  if (x.size() != g.size()) throw Error(Errc::LengthMismatch, "pose count differs from piece count");
  PointCloud out(3, static_cast<Eigen::Index>(x.total_points()));
  Eigen::Index o = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto& p = x.pieces[i];
    out.middleCols(o, p.cols()) = (g[i].r.matrix() * p).colwise() + g[i].t;
    o += p.cols();
  }
  return out;
}

}  // namespace asmflow::data
