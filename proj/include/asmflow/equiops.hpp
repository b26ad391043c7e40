#pragma once

// Differentiable equivariant layers on top of the tensor engine.
//
// Point features are tensors of shape [P, (L+1)^2, c] (component-major,
// channel-last), matching IrrepsFeature row layout.

#include <cstddef>
#include <span>
#include <vector>

#include "asmflow/irreps.hpp"
#include "asmflow/tensor.hpp"

namespace asmflow::equinet {

using tensor::Tensor;

/// Geometry of one message edge (not differentiated).
struct EdgeGeom {
  std::size_t src;
  std::size_t dst;
  irreps::EdgeFrame frame;
};

/// Per-edge Wigner blocks and radial features, shared by every message that
/// uses the same edge list.
struct EdgeCache {
  int l_max = 0;
  std::vector<EdgeGeom> edges;
  std::vector<double> wigner;  // packed_wigner_size(l_max) per edge
  std::vector<double> radial;  // basis.size per edge
  std::vector<std::size_t> dst;

  static EdgeCache build(std::vector<EdgeGeom> edges, int l_max, const irreps::RadialBasis& basis);
  std::size_t size() const noexcept { return edges.size(); }
};

/// SO(2)-reduced edge message from the source features. `mix` is
/// [(L+1)c, (L+1)c] (row = l_out*c + c_out), `radial_a` is [nb, (L+1)c],
/// `radial_b` is [nb, L*c]. Output [E, (L+1)^2, c].
template <typename T>
Tensor<T> so2_message(const Tensor<T>& feats, const EdgeCache& edges, const Tensor<T>& mix,
                      const Tensor<T>& radial_a, const Tensor<T>& radial_b);

/// Per-degree channel map: out^l = W_l F^l with W of shape [n, c_out, c_in]
/// where n = 1 (shared by all degrees) or L+1.
template <typename T>
Tensor<T> degree_linear(const Tensor<T>& feats, const Tensor<T>& w);

/// Attention logits [E, heads]: <Q_dst, K_e> over the head's channel slice
/// and all components, divided by sqrt(components * channels_per_head).
template <typename T>
Tensor<T> head_logits(const Tensor<T>& q, const Tensor<T>& k, std::span<const std::size_t> dst,
                      std::size_t heads);

/// out[dst_e] += alpha[e, head(ch)] * V[e] -> [P, comps, c].
template <typename T>
Tensor<T> head_weighted(const Tensor<T>& alpha, const Tensor<T>& v, std::span<const std::size_t> dst,
                        std::size_t points);

enum class GateMode { gate, literal };

/// Equivariant GELU. With u = G/|G| per (point, degree, channel) and
/// s = <F, u>: gate mode returns F * Phi(s) (= F * GELU(s)/s), literal mode
/// returns GELU(s) * u. G is normally a channel map of F.
template <typename T>
Tensor<T> equivariant_gelu(const Tensor<T>& f, const Tensor<T>& g, GateMode mode);

/// Normalization: degrees >= 1 are divided by
/// sigma = sqrt(1/(c L) sum_{l>=1} <F^l, F^l>/(2l+1)), degree 0 by its own
/// channel RMS; both are floored at 1e-8. The result is scaled per channel
/// by `scale` [c].
template <typename T>
Tensor<T> adaptive_norm(const Tensor<T>& f, const Tensor<T>& scale);

/// Mean of rows [P, ...] per segment -> [S, ...].
template <typename T>
Tensor<T> segment_mean(const Tensor<T>& x, std::span<const std::size_t> segment, std::size_t segments);

/// Twist head: from [N, 3, 2] (degree-1 vectors w and u per piece) and the
/// piece centroids, returns [N, 6] rows (w, u - w x centroid).
template <typename T>
Tensor<T> twist_head(const Tensor<T>& wu, std::span<const Eigen::Vector3d> centroids);

}  // namespace asmflow::equinet
