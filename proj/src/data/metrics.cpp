#include <cmath>
#include <numbers>

#include "asmflow/data.hpp"
#include "asmflow/error.hpp"

namespace asmflow::data {

MetricResult pairwise_error(const lie::GroupElementN& pred, const lie::GroupElementN& gt) {
  const std::size_t n = gt.size();
  if (pred.size() != n) throw Error(Errc::LengthMismatch, "prediction and ground truth differ in piece count");
  if (n < 2) throw Error(Errc::LengthMismatch, "pair-wise error needs at least two pieces");
  MetricResult m;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      // pred_i against pred_j gt_j^-1 gt_i, compared after left-multiplying
      // both by pred_j^-1 (an isometry for both terms).
      const lie::RigidTransform p = pred[j].inverse() * pred[i];
      const lie::RigidTransform g = gt[j].inverse() * gt[i];
      if (p.r.matrix() == g.r.matrix() && p.t == g.t) continue;
      const Eigen::Matrix3d rel = p.r.matrix().transpose() * g.r.matrix();
      const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
      m.delta_r += std::acos(c) * 180.0 / std::numbers::pi;
      m.delta_t += (p.t - g.t).norm();
    }
  const double pairs = static_cast<double>(n * (n - 1));
  m.delta_r /= pairs;
  m.delta_t /= pairs;
  return m;
}

}  // namespace asmflow::data
