#pragma once

// Point subsets and neighbor graphs used by the network layers. Everything
// here depends only on point coordinates and is deterministic: distance ties
// are broken by point index.

#include <Eigen/Core>

#include <cstddef>
#include <vector>

namespace asmflow::graph {

using Points = Eigen::Matrix3Xd;

/// Farthest point sampling of ceil(ratio * n) indices. The first pick is the
/// point farthest from the centroid; each later pick maximizes the distance
/// to the picked set. Throws PieceTooSmall for an empty input or ratio
/// outside (0, 1].
std::vector<std::size_t> fps(const Points& pts, double ratio);

/// Indices of the k nearest points of `cand` to `query` (ascending distance,
/// ties by index); `exclude` is skipped (use SIZE_MAX for none).
std::vector<std::size_t> knn(const Points& cand, const Eigen::Vector3d& query, std::size_t k,
                             std::size_t exclude);

/// Directed edge src -> dst where dst is a query (attending) point.
struct Edge {
  std::size_t src;
  std::size_t dst;
};

/// Points grouped into pieces. `piece[p]` is the piece of point p; points
/// of one piece are contiguous.
struct Layout {
  Points pts;
  std::vector<std::size_t> piece;
  std::vector<std::size_t> begin;  // size num_pieces + 1

  std::size_t num_pieces() const noexcept { return begin.empty() ? 0 : begin.size() - 1; }
  std::size_t num_points() const noexcept { return piece.size(); }
  std::size_t piece_size(std::size_t i) const { return begin[i + 1] - begin[i]; }
};

Layout make_layout(const std::vector<Points>& pieces);

/// Per-piece FPS; returns global indices into `from` and the sub-layout.
struct Subset {
  std::vector<std::size_t> index;
  Layout layout;
};
Subset downsample(const Layout& from, double ratio);

/// Self edges: each query point attends to its k nearest points of the same
/// piece in `keys`, itself excluded. `query_index[q]` gives the position of
/// query q inside `keys` (or SIZE_MAX when the query is not a key). Throws
/// EmptyNeighborhood when a piece offers no neighbor.
std::vector<Edge> self_edges(const Layout& keys, const Layout& queries,
                             const std::vector<std::size_t>& query_index, std::size_t k);

/// Cross edges: each point attends to its k nearest points in every other
/// piece.
std::vector<Edge> cross_edges(const Layout& layout, std::size_t k);

}  // namespace asmflow::graph
