#include <algorithm>
#include <limits>
#include <set>

#include "asmflow/error.hpp"
#include "asmflow/graph.hpp"
#include "doctest.h"

using namespace asmflow;
using namespace asmflow::graph;

namespace {
constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

Points line(int n, double x0 = 0.0) {
  Points p(3, n);
  for (int i = 0; i < n; ++i) p.col(i) = Eigen::Vector3d(x0 + i, 0, 0);
  return p;
}
}  // namespace

TEST_CASE("fps picks extremes first and returns ceil(ratio n) distinct points") {
  const Points p = line(10);
  const auto s = fps(p, 0.25);
  REQUIRE(s.size() == 3);
  CHECK(s[0] == 0);  // tie between both ends broken by index
  CHECK(s[1] == 9);
  CHECK((s[2] == 4 || s[2] == 5));
  CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == s.size());
  CHECK(fps(p, 1.0).size() == 10);
  CHECK(fps(line(1), 0.1).size() == 1);
  CHECK_THROWS_AS(fps(Points(3, 0), 0.5), Error);
  CHECK_THROWS_AS(fps(p, 0.0), Error);
}

TEST_CASE("knn orders by distance and breaks ties by index") {
  const Points p = line(5);
  const auto nb = knn(p, Eigen::Vector3d(2, 0, 0), 3, kNone);
  CHECK(nb == std::vector<std::size_t>{2, 1, 3});
  CHECK(knn(p, Eigen::Vector3d(2, 0, 0), 2, 2) == std::vector<std::size_t>{1, 3});
  CHECK(knn(p, Eigen::Vector3d(0, 0, 0), 50, kNone).size() == 5);
}

TEST_CASE("layouts, downsampling and edges") {
  const Layout l = make_layout({line(4), line(3, 100.0)});
  CHECK(l.num_pieces() == 2);
  CHECK(l.num_points() == 7);
  CHECK(l.piece[5] == 1);

  const Subset s = downsample(l, 0.5);
  CHECK(s.layout.piece_size(0) == 2);
  CHECK(s.layout.piece_size(1) == 2);
  for (std::size_t i = 0; i < s.index.size(); ++i)
    CHECK((s.layout.pts.col(static_cast<Eigen::Index>(i)) - l.pts.col(static_cast<Eigen::Index>(s.index[i]))).norm() == 0.0);

  std::vector<std::size_t> self_idx(l.num_points());
  for (std::size_t i = 0; i < self_idx.size(); ++i) self_idx[i] = i;
  const auto e = self_edges(l, l, self_idx, 2);
  CHECK(e.size() == 14);
  for (const auto& x : e) {
    CHECK(x.src != x.dst);
    CHECK(l.piece[x.src] == l.piece[x.dst]);
  }
  const auto down = self_edges(l, s.layout, s.index, 10);
  for (const auto& x : down) CHECK(l.piece[x.src] == s.layout.piece[x.dst]);

  const auto c = cross_edges(l, 2);
  CHECK(c.size() == 14);
  for (const auto& x : c) CHECK(l.piece[x.src] != l.piece[x.dst]);
}

TEST_CASE("single-point pieces have no self neighborhood") {
  const Layout l = make_layout({line(1), line(3)});
  std::vector<std::size_t> idx{0, 1, 2, 3};
  CHECK_THROWS_AS(self_edges(l, l, idx, 3), Error);
}
