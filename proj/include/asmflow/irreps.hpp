#pragma once

// Real spherical harmonics, real Wigner-D matrices, real Clebsch-Gordan
// tensors and the two edge-message kernels (full tensor product and the
// SO(2)-reduced form).
//
// Basis convention: real harmonics with y as the polar axis. Within degree l
// components are ordered m = -l..l; the degree-1 harmonics are proportional
// to (x, y, z), so the degree-1 Wigner-D matrix of r is r itself. A feature
// with l_max = L stores (L+1)^2 components; degree l occupies rows
// [l^2, (l+1)^2).

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <vector>

#include "asmflow/lie.hpp"

namespace asmflow::irreps {

using Vec3 = Eigen::Vector3d;
using MatrixXd = Eigen::MatrixXd;
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kMaxDegree = 4;

constexpr int degree_dim(int l) noexcept { return 2 * l + 1; }
constexpr int degree_offset(int l) noexcept { return l * l; }
constexpr int num_components(int l_max) noexcept { return (l_max + 1) * (l_max + 1); }

/// Real spherical harmonics of degree l at a unit direction (orthonormal on
/// the sphere). Throws ZeroDirection for |dir| < 1e-12 and ShapeMismatch
/// when |dir| deviates from 1 by more than 1e-9.
Eigen::VectorXd sph_harm(int l, const Vec3& dir);
/// All degrees 0..l_max into `out` ((l_max+1)^2 values); `dir` must be unit.
void sph_harm_all(int l_max, const Vec3& dir, double* out) noexcept;

/// Real Wigner-D matrix of degree l (0 <= l <= kMaxDegree):
/// Y^l(r dir) = D^l(r) Y^l(dir).
MatrixXd wigner_d(int l, const lie::Rotation& r);
/// Block-diagonal D for degrees 0..l_max, size (l_max+1)^2 square.
MatrixXd wigner_d_blocks(int l_max, const lie::Rotation& r);
/// Number of doubles written by wigner_d_packed.
constexpr int packed_wigner_size(int l_max) noexcept {
  int n = 0;
  for (int l = 1; l <= l_max; ++l) n += degree_dim(l) * degree_dim(l);
  return n;
}
/// Blocks for degrees 1..l_max stored one after another, each row-major.
/// Cheaper than repeated wigner_d calls; used by the message kernels.
void wigner_d_packed(int l_max, const lie::Rotation& r, double* out);

/// Real-basis coupling tensor C[a, b, c] for degrees (l1, l2) -> l3:
/// z_c = sum_ab C[a,b,c] x_a y_b is equivariant. Cached after first use.
class CouplingTensor {
 public:
  CouplingTensor(int l1, int l2, int l3, std::vector<double> data)
      : l1_(l1), l2_(l2), l3_(l3), data_(std::move(data)) {}

  int l1() const noexcept { return l1_; }
  int l2() const noexcept { return l2_; }
  int l3() const noexcept { return l3_; }
  double operator()(int a, int b, int c) const noexcept {
    return data_[(static_cast<std::size_t>(a) * degree_dim(l2_) + b) * degree_dim(l3_) + c];
  }
  const std::vector<double>& data() const noexcept { return data_; }

 private:
  int l1_, l2_, l3_;
  std::vector<double> data_;
};

/// Throws SelectionRuleViolation unless |l1-l2| <= l3 <= l1+l2, and
/// SpecMismatch for degrees beyond kMaxDegree.
const CouplingTensor& clebsch_gordan(int l1, int l2, int l3);

struct IrrepsSpec {
  int l_max = 2;
  int channels = 1;

  int components() const noexcept { return num_components(l_max); }
  bool operator==(const IrrepsSpec&) const = default;
};

/// Per-point equivariant feature: (l_max+1)^2 components x channels.
class IrrepsFeature {
 public:
  IrrepsFeature() = default;
  explicit IrrepsFeature(IrrepsSpec spec)
      : spec_(spec), data_(RowMatrixXd::Zero(spec.components(), spec.channels)) {}
  IrrepsFeature(IrrepsSpec spec, RowMatrixXd data);

  const IrrepsSpec& spec() const noexcept { return spec_; }
  RowMatrixXd& data() noexcept { return data_; }
  const RowMatrixXd& data() const noexcept { return data_; }

  /// (2l+1) x channels block of degree l.
  auto block(int l) { return data_.middleRows(degree_offset(l), degree_dim(l)); }
  auto block(int l) const { return data_.middleRows(degree_offset(l), degree_dim(l)); }

  /// Applies D(r) degree by degree.
  IrrepsFeature rotated(const lie::Rotation& r) const;

 private:
  IrrepsSpec spec_;
  RowMatrixXd data_;
};

/// Frame of an edge: r_align maps the unit edge direction to +y.
struct EdgeFrame {
  lie::Rotation r_align;
  Vec3 dir = Vec3::UnitY();
  double dist = 1.0;
};

/// Frame for the edge vector `v` (from source to destination). Throws
/// ZeroDirection when |v| < 1e-12.
EdgeFrame make_edge_frame(const Vec3& v);

/// Gaussian radial basis on [0, cutoff]. With `with_constant` the first of
/// the `size` features is the constant 1, so distant pairs still get a
/// non-zero coefficient.
struct RadialBasis {
  int size = 8;
  double cutoff = 2.0;
  bool with_constant = false;

  void evaluate(double dist, double* out) const noexcept;
};

/// Weights of the SO(2)-reduced message. Channel/degree mixing `mix` has
/// rows (l_out * c + c_out) and columns (l_in * c + c_in) and is shared by
/// every m column. Per-channel rotation-form coefficients a_m (m = 0..L) and
/// b_m (m = 1..L) are linear in the radial basis:
///   a[m*c + ch](d) = sum_k phi_k(d) radial_a(k, m*c + ch)
///   b[(m-1)*c + ch](d) = sum_k phi_k(d) radial_b(k, (m-1)*c + ch)
struct So2Weights {
  IrrepsSpec spec;
  RadialBasis basis;
  MatrixXd mix;
  MatrixXd radial_a;
  MatrixXd radial_b;

  static So2Weights random(IrrepsSpec spec, RadialBasis basis, lie::Rng& rng);
  void validate() const;
};

struct TpPath {
  int l_out;
  int l_edge;
  int l_in;
};

/// Weights of the full tensor-product message. For each path the edge
/// coefficient of input channel c is gamma_c(d) = sum_k phi_k(d) radial[p](k, c);
/// the path output is then mixed across channels by mix[p] (c_out x c_in).
struct TpWeights {
  IrrepsSpec spec;
  RadialBasis basis;
  std::vector<TpPath> paths;
  std::vector<MatrixXd> mix;
  std::vector<MatrixXd> radial;
};

/// All paths (l_out, l_edge, l_in) with l_out, l_in <= l_max and
/// |l_out - l_in| <= l_edge <= l_out + l_in.
std::vector<TpPath> tp_paths(int l_max);

/// Tensor-product weights producing exactly the same message as the given
/// SO(2)-reduced weights.
TpWeights tp_weights_from_so2(const So2Weights& so2);

struct MessageEdge {
  std::size_t src;
  EdgeFrame frame;
};

/// Source features are stored point-major: feats[p * comps * c + i * c + ch].
/// Output is edge-major with the same inner layout.
void so2_messages(std::span<const double> feats, std::span<const MessageEdge> edges,
                  const So2Weights& w, std::span<double> out);
void tp_messages(std::span<const double> feats, std::span<const MessageEdge> edges,
                 const TpWeights& w, std::span<double> out);

/// Single-edge conveniences over the batched kernels.
IrrepsFeature so2_reduced_message(const IrrepsFeature& f, const EdgeFrame& edge,
                                  const So2Weights& w);
IrrepsFeature tp_message(const IrrepsFeature& f, const EdgeFrame& edge, const TpWeights& w);

/// Coordinates of the SO(2)-equivariant maps (degree l_in -> l_out, edge on
/// +y) spanned by the tensor-product paths: column j of the returned matrix
/// holds the (a_0..a_k, b_1..b_k) coordinates of path l_edge = |l_out-l_in|+j,
/// k = min(l_out, l_in). Exposed for tests.
MatrixXd so2_path_coordinates(int l_out, int l_in);

}  // namespace asmflow::irreps
