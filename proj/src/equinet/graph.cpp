#include "asmflow/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "asmflow/error.hpp"

namespace asmflow::graph {

std::vector<std::size_t> fps(const Points& pts, double ratio) {
  const std::size_t n = static_cast<std::size_t>(pts.cols());
  if (n == 0) throw Error(Errc::PieceTooSmall, "cannot sample from an empty piece");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw Error(Errc::PieceTooSmall, "sampling ratio must be in (0, 1]");
  const std::size_t m = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9)));

  const Eigen::Vector3d c = pts.rowwise().mean();
  std::size_t first = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (pts.col(static_cast<Eigen::Index>(i)) - c).squaredNorm();
    if (d > best) {
      best = d;
      first = i;
    }
  }
  std::vector<std::size_t> out{first};
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::size_t last = first;
  while (out.size() < m) {
    std::size_t pick = 0;
    double far = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], (pts.col(static_cast<Eigen::Index>(i)) - pts.col(static_cast<Eigen::Index>(last))).squaredNorm());
      if (dist[i] > far) {
        far = dist[i];
        pick = i;
      }
    }
    out.push_back(pick);
    last = pick;
  }
  return out;
}

std::vector<std::size_t> knn(const Points& cand, const Eigen::Vector3d& query, std::size_t k,
                             std::size_t exclude) {
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(static_cast<std::size_t>(cand.cols()));
  for (Eigen::Index i = 0; i < cand.cols(); ++i) {
    if (static_cast<std::size_t>(i) == exclude) continue;
    d.emplace_back((cand.col(i) - query).squaredNorm(), static_cast<std::size_t>(i));
  }
  k = std::min(k, d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = d[i].second;
  return out;
}

Layout make_layout(const std::vector<Points>& pieces) {
  Layout l;
  std::size_t total = 0;
  for (const auto& p : pieces) total += static_cast<std::size_t>(p.cols());
  l.pts.resize(3, static_cast<Eigen::Index>(total));
  l.begin.push_back(0);
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const std::size_t b = l.begin.back();
    l.pts.middleCols(static_cast<Eigen::Index>(b), pieces[i].cols()) = pieces[i];
    l.piece.insert(l.piece.end(), static_cast<std::size_t>(pieces[i].cols()), i);
    l.begin.push_back(b + static_cast<std::size_t>(pieces[i].cols()));
  }
  return l;
}

Subset downsample(const Layout& from, double ratio) {
  Subset s;
  std::vector<Points> parts;
  for (std::size_t i = 0; i < from.num_pieces(); ++i) {
    const auto b = static_cast<Eigen::Index>(from.begin[i]);
    const auto n = static_cast<Eigen::Index>(from.piece_size(i));
    const Points piece = from.pts.middleCols(b, n);
    auto pick = fps(piece, ratio);
    Points sub(3, static_cast<Eigen::Index>(pick.size()));
    for (std::size_t j = 0; j < pick.size(); ++j) {
      sub.col(static_cast<Eigen::Index>(j)) = piece.col(static_cast<Eigen::Index>(pick[j]));
      s.index.push_back(from.begin[i] + pick[j]);
    }
    parts.push_back(std::move(sub));
  }
  s.layout = make_layout(parts);
  return s;
}

std::vector<Edge> self_edges(const Layout& keys, const Layout& queries,
                             const std::vector<std::size_t>& query_index, std::size_t k) {
  std::vector<Edge> edges;
  for (std::size_t q = 0; q < queries.num_points(); ++q) {
    const std::size_t pc = queries.piece[q];
    const auto b = keys.begin[pc];
    const Points cand = keys.pts.middleCols(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(keys.piece_size(pc)));
    const std::size_t self = query_index.empty() || query_index[q] == std::numeric_limits<std::size_t>::max()
                                 ? std::numeric_limits<std::size_t>::max()
                                 : query_index[q] - b;
    const auto nb = knn(cand, queries.pts.col(static_cast<Eigen::Index>(q)), k, self);
    if (nb.empty()) throw Error(Errc::EmptyNeighborhood, "piece " + std::to_string(pc) + " has fewer than 2 points");
    for (auto j : nb) edges.push_back({b + j, q});
  }
  return edges;
}

std::vector<Edge> cross_edges(const Layout& layout, std::size_t k) {
  std::vector<Edge> edges;
  for (std::size_t q = 0; q < layout.num_points(); ++q) {
    for (std::size_t pc = 0; pc < layout.num_pieces(); ++pc) {
      if (pc == layout.piece[q]) continue;
      const auto b = layout.begin[pc];
      const Points cand = layout.pts.middleCols(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(layout.piece_size(pc)));
      for (auto j : knn(cand, layout.pts.col(static_cast<Eigen::Index>(q)), k, std::numeric_limits<std::size_t>::max()))
        edges.push_back({b + j, q});
    }
  }
  return edges;
}

}  // namespace asmflow::graph
