#pragma once

// Assembly datasets: synthetic generation, point-cloud I/O and metrics.

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "asmflow/lie.hpp"
#include "asmflow/pieces.hpp"

namespace asmflow::data {

/// Pieces in their own centered frames plus the ground-truth poses placing
/// them into the (centered) assembly.
struct AssemblyRecord {
  std::string shape_id;
  std::string split;
  PieceSet pieces;
  lie::GroupElementN gt;
};

enum class ShapeFamily {
  composite,  // chiral union of an ellipsoid, a box and a cylinder
  cube,       // unit cube surface with a corner marker
};

ShapeFamily parse_family(const std::string& name);
std::string family_name(ShapeFamily f);

struct SyntheticParams {
  std::size_t points_per_shape = 400;
  std::size_t min_piece_points = 24;
  std::size_t max_piece_points = 400;
  int max_cut_attempts = 200;

  bool operator==(const SyntheticParams&) const = default;
};

/// Surface samples of one random shape of the family, scaled so the farthest
/// point is at distance 1 from the centroid.
PointCloud sample_shape(ShapeFamily family, std::size_t points, lie::Rng& rng);

/// Splits `pts` into n parts by random plane cuts (each cut splits the
/// currently largest part). Part sizes respect the bounds in `params`;
/// throws DegenerateCut when no valid cut is found.
std::vector<std::vector<std::size_t>> cut_pieces(const PointCloud& pts, std::size_t n,
                                                 const SyntheticParams& params, lie::Rng& rng);

/// Builds a record from assembled points and their partition: the assembly
/// is shifted so the piece centroids sum to zero, and each piece is stored
/// in a random orientation about its centroid.
AssemblyRecord make_record(const PointCloud& pts, const std::vector<std::vector<std::size_t>>& parts,
                           lie::Rng& rng);

std::vector<AssemblyRecord> generate_synthetic(ShapeFamily family, std::size_t n_pieces, std::size_t count,
                                               const SyntheticParams& params, lie::Rng& rng);

/// Points g_i X_i of every piece concatenated.
PointCloud assemble(const PieceSet& x, const lie::GroupElementN& g);

/// Centroid of each occupied cell of a grid of size `cell`. cell <= 0 returns
/// the input unchanged.
PointCloud grid_downsample(const PointCloud& pts, double cell);

struct MetricResult {
  double delta_r = 0.0;  // degrees
  double delta_t = 0.0;
};

/// Averaged pair-wise error: mean over ordered pairs i != j of the rotation
/// angle and translation distance between pred_i and pred_j gt_j^-1 gt_i.
MetricResult pairwise_error(const lie::GroupElementN& pred, const lie::GroupElementN& gt);

/// One "x y z" line per point.
PointCloud read_xyz(const std::filesystem::path& path);
void write_xyz(const std::filesystem::path& path, const PointCloud& pts);

/// Writes <dir>/piece_<i>.xyz and <dir>/manifest.json.
void write_record(const std::filesystem::path& dir, const AssemblyRecord& rec);
AssemblyRecord read_record(const std::filesystem::path& dir);

/// Predicted poses of one shape as {"shape_id", "poses": [{q, t}...]}.
void write_poses(const std::filesystem::path& path, const std::string& shape_id, const lie::GroupElementN& g);
lie::GroupElementN read_poses(const std::filesystem::path& path, std::string* shape_id = nullptr);

/// Dataset layout <root>/<split>/<shape_id>/...; shapes are returned sorted
/// by id.
void write_dataset(const std::filesystem::path& root, const std::vector<AssemblyRecord>& recs);
std::vector<AssemblyRecord> read_split(const std::filesystem::path& root, const std::string& split);

}  // namespace asmflow::data
