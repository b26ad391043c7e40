#pragma once

// The assembly vector field network: point embedding, downsampling blocks,
// self/cross attention blocks and a per-piece twist head.

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "asmflow/equiops.hpp"
#include "asmflow/graph.hpp"
#include "asmflow/lie.hpp"
#include "asmflow/pieces.hpp"
#include "asmflow/tensor.hpp"

namespace asmflow::equinet {

struct ModelConfig {
  int n_croco_blocks = 2;
  int n_downsample = 4;
  double downsample_ratio = 0.25;
  int k_neighbors = 10;
  int l_max = 2;
  int channels = 64;
  int heads = 4;
  int radial_size = 16;       // radial features per edge, the first is constant
  double radial_cutoff = 4.0;
  int time_frequencies = 8;
  bool literal_elu = false;   // GELU(s) * u instead of F * Phi(s)

  /// Throws InvalidConfig.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Smallest piece size that keeps at least two points on every downsampling
/// level and a full neighborhood on the input level.
std::size_t min_piece_points(const ModelConfig& cfg);

/// Named float32 parameter arrays in a fixed order.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    tensor::Shape shape;
    std::vector<float> data;
  };

  Entry& add(std::string name, tensor::Shape shape);
  const Entry& at(const std::string& name) const;
  Entry& at(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::vector<Entry>& entries() noexcept { return entries_; }
  std::size_t total_size() const noexcept;

  /// All values concatenated in entry order, and the inverse.
  std::vector<float> flatten() const;
  void assign(const std::vector<float>& flat);

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Randomly initialized parameters for `cfg`.
ParamStore init_params(const ModelConfig& cfg, lie::Rng& rng);

/// Rigid-invariant part of the graph: the per-piece FPS hierarchy and the
/// intra-piece neighbor lists, computed in the pieces' own frames.
struct PieceGraph {
  struct Level {
    std::vector<std::size_t> index;          // selected points of the previous level
    std::vector<graph::Edge> edges;          // previous level -> this level
    std::vector<std::size_t> piece;          // piece of each selected point
  };
  std::size_t num_pieces = 0;
  std::vector<std::size_t> base_piece;       // piece of each input point
  std::vector<Level> levels;                 // one per downsampling block
  std::vector<graph::Edge> top_self_edges;   // self edges on the last level

  static PieceGraph build(const PieceSet& x, const ModelConfig& cfg);
};

/// Network evaluation with parameters converted to T. With `trainable` set
/// the parameters are gradient leaves and forward() must run under a tape.
template <typename T>
class Network {
 public:
  Network(const ModelConfig& cfg, const ParamStore& params, bool trainable = false);

  /// Twists [N, 6] rows (w, t) for state g at time tau.
  tensor::Tensor<T> forward(const PieceSet& x, const PieceGraph& pg, const lie::GroupElementN& g,
                            double tau) const;
  tensor::Tensor<T> forward(const PieceSet& x, const lie::GroupElementN& g, double tau) const;

  /// Adds the parameter gradients, flattened in ParamStore order.
  void accumulate_grads(std::vector<double>& flat) const;
  /// Adds scale * delta to the converted parameters (ParamStore order), so
  /// float64 networks can be perturbed below float32 resolution.
  void shift_params(const std::vector<double>& delta, double scale);
  const ModelConfig& config() const noexcept { return cfg_; }

 private:
  const tensor::Tensor<T>& p(const std::string& name) const;

  ModelConfig cfg_;
  std::vector<std::string> names_;
  std::map<std::string, tensor::Tensor<T>> params_;
};

lie::TwistN to_twists(const tensor::Tensor<double>& rows);

/// Frozen-weight field evaluation in float64; reentrant.
class VectorField {
 public:
  VectorField(ModelConfig cfg, const ParamStore& params) : net_(std::make_shared<Network<double>>(cfg, params)) {}
  lie::TwistN operator()(const PieceSet& x, const PieceGraph& pg, const lie::GroupElementN& g, double tau) const {
    return to_twists(net_->forward(x, pg, g, tau));
  }
  const ModelConfig& config() const noexcept { return net_->config(); }

 private:
  std::shared_ptr<const Network<double>> net_;
};

}  // namespace asmflow::equinet
