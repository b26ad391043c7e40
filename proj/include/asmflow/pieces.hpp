#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <vector>

namespace asmflow {

/// Points of one piece stored column-wise (3 x M).
using PointCloud = Eigen::Matrix3Xd;

/// N point clouds in their own (centered) frames; the conditioning input of
/// the assembly problem.
struct PieceSet {
  std::vector<PointCloud> pieces;

  std::size_t size() const noexcept { return pieces.size(); }
  std::size_t total_points() const noexcept {
    std::size_t n = 0;
    for (const auto& p : pieces) n += static_cast<std::size_t>(p.cols());
    return n;
  }
};

inline Eigen::Vector3d centroid(const PointCloud& pts) {
  if (pts.cols() == 0) return Eigen::Vector3d::Zero();
  return pts.rowwise().mean();
}

}  // namespace asmflow
