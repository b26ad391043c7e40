#include "asmflow/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "asmflow/error.hpp"

namespace asmflow::equinet {

using tensor::Shape;
using tensor::Tensor;

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(Errc::InvalidConfig, m); };
  if (n_croco_blocks < 0 || n_downsample < 0) fail("block counts must be non-negative");
  if (!(downsample_ratio > 0.0 && downsample_ratio <= 1.0)) fail("downsample_ratio must be in (0, 1]");
  if (k_neighbors < 1) fail("k_neighbors must be positive");
  if (l_max < 1 || l_max > 2) fail("l_max must be 1 or 2");
  if (channels < 1 || heads < 1 || channels % heads != 0) fail("channels must be a positive multiple of heads");
  if (radial_size < 2 || !(radial_cutoff > 0.0)) fail("radial basis needs size >= 2 and a positive cutoff");
  if (time_frequencies < 1) fail("time_frequencies must be positive");
}

// ---- Parameters ------------------------------------------------------------

ParamStore::Entry& ParamStore::add(std::string name, Shape shape) {
  if (index_.count(name)) throw Error(Errc::InvalidConfig, "duplicate parameter " + name);
  index_[name] = entries_.size();
  const std::size_t n = tensor::numel(shape);
  entries_.push_back({std::move(name), std::move(shape), std::vector<float>(n, 0.0f)});
  return entries_.back();
}

const ParamStore::Entry& ParamStore::at(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw Error(Errc::SpecMismatch, "missing parameter " + name);
  return entries_[it->second];
}

ParamStore::Entry& ParamStore::at(const std::string& name) {
  return const_cast<Entry&>(static_cast<const ParamStore&>(*this).at(name));
}

std::size_t ParamStore::total_size() const noexcept {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.data.size();
  return n;
}

std::vector<float> ParamStore::flatten() const {
  std::vector<float> out;
  out.reserve(total_size());
  for (const auto& e : entries_) out.insert(out.end(), e.data.begin(), e.data.end());
  return out;
}

void ParamStore::assign(const std::vector<float>& flat) {
  if (flat.size() != total_size()) throw Error(Errc::ShapeMismatch, "flat parameter vector has the wrong size");
  std::size_t o = 0;
  for (auto& e : entries_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(o), e.data.size(), e.data.begin());
    o += e.data.size();
  }
}

namespace {

std::vector<std::string> block_names(const ModelConfig& cfg) {
  std::vector<std::string> b;
  for (int i = 0; i < cfg.n_downsample; ++i) b.push_back("down" + std::to_string(i));
  for (int i = 0; i < cfg.n_croco_blocks; ++i) {
    b.push_back("croco" + std::to_string(i) + ".self");
    b.push_back("croco" + std::to_string(i) + ".cross");
  }
  return b;
}

// Parameter layout: (name, shape, init std; 0 = zeros).
struct ParamSpec {
  std::string name;
  Shape shape;
  double stddev;
};

std::vector<ParamSpec> param_specs(const ModelConfig& cfg) {
  const std::size_t c = static_cast<std::size_t>(cfg.channels), lp = static_cast<std::size_t>(cfg.l_max + 1);
  const std::size_t nb = static_cast<std::size_t>(cfg.radial_size), tf = 2 * static_cast<std::size_t>(cfg.time_frequencies);
  const double sc = 1.0 / std::sqrt(static_cast<double>(c));
  std::vector<ParamSpec> s = {
      {"embed", {lp, c, 2}, 1.0},
      {"time.w1", {c, tf}, 1.0 / std::sqrt(static_cast<double>(tf))},
      {"time.b1", {c}, 0.0},
      {"time.w2", {c, c}, sc},
      {"time.b2", {c}, 0.0},
  };
  auto norm = [&](const std::string& n) {
    s.push_back({n + ".w", {c, c}, 0.1 * sc});
    s.push_back({n + ".b", {c}, 0.0});
  };
  for (const auto& b : block_names(cfg)) {
    norm(b + ".norm1");
    s.push_back({b + ".q", {lp, c, c}, sc});
    for (const char* kv : {".k", ".v"}) {
      s.push_back({b + kv + ".mix", {lp * c, lp * c}, 1.0 / std::sqrt(static_cast<double>(lp * c))});
      s.push_back({b + kv + ".ra", {nb, lp * c}, 1.0 / std::sqrt(static_cast<double>(nb))});
      s.push_back({b + kv + ".rb", {nb, (lp - 1) * c}, 1.0 / std::sqrt(static_cast<double>(nb))});
    }
    s.push_back({b + ".o", {lp, c, c}, sc});
    norm(b + ".norm2");
    s.push_back({b + ".ff1", {lp, c, c}, sc});
    s.push_back({b + ".gate", {1, c, c}, sc});
    s.push_back({b + ".ff2", {lp, c, c}, sc});
  }
  norm("head.norm");
  s.push_back({"head.w", {2, c}, sc});
  return s;
}

}  // namespace

std::size_t min_piece_points(const ModelConfig& cfg) {
  cfg.validate();
  const auto survives = [&](std::size_t n) {
    for (int i = 0; i < cfg.n_downsample; ++i)
      n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.downsample_ratio * static_cast<double>(n) - 1e-9)));
    return n >= 2;
  };
  std::size_t n = static_cast<std::size_t>(cfg.k_neighbors) + 1;
  while (!survives(n)) ++n;
  return n;
}

ParamStore init_params(const ModelConfig& cfg, lie::Rng& rng) {
  cfg.validate();
  ParamStore ps;
  std::normal_distribution<double> n01(0.0, 1.0);
  for (const auto& s : param_specs(cfg)) {
    auto& e = ps.add(s.name, s.shape);
    if (s.stddev > 0)
      for (auto& v : e.data) v = static_cast<float>(s.stddev * n01(rng));
  }
  return ps;
}

// ---- Rigid-invariant graph ---------------------------------------------------

PieceGraph PieceGraph::build(const PieceSet& x, const ModelConfig& cfg) {
  cfg.validate();
  if (x.size() < 2) throw Error(Errc::PieceTooSmall, "an assembly needs at least two pieces");
  PieceGraph pg;
  pg.num_pieces = x.size();
  const std::size_t k = static_cast<std::size_t>(cfg.k_neighbors);
  graph::Layout layout = graph::make_layout(x.pieces);
  pg.base_piece = layout.piece;
  for (int i = 0; i < cfg.n_downsample; ++i) {
    graph::Subset sub = graph::downsample(layout, cfg.downsample_ratio);
    Level lv;
    lv.edges = graph::self_edges(layout, sub.layout, sub.index, k);
    lv.index = sub.index;
    lv.piece = sub.layout.piece;
    pg.levels.push_back(std::move(lv));
    layout = std::move(sub.layout);
  }
  std::vector<std::size_t> ident(layout.num_points());
  std::iota(ident.begin(), ident.end(), std::size_t{0});
  pg.top_self_edges = graph::self_edges(layout, layout, ident, k);
  return pg;
}

// ---- Network -----------------------------------------------------------------

template <typename T>
Network<T>::Network(const ModelConfig& cfg, const ParamStore& params, bool trainable) : cfg_(cfg) {
  cfg_.validate();
  for (const auto& s : param_specs(cfg_)) {
    const auto& e = params.at(s.name);
    if (e.shape != s.shape) throw Error(Errc::SpecMismatch, "parameter " + s.name + " has the wrong shape");
    names_.push_back(s.name);
    params_.emplace(s.name, Tensor<T>::from(e.shape, std::vector<T>(e.data.begin(), e.data.end()), trainable));
  }
}

template <typename T>
const Tensor<T>& Network<T>::p(const std::string& name) const {
  return params_.at(name);
}

template <typename T>
void Network<T>::accumulate_grads(std::vector<double>& flat) const {
  std::size_t total = 0;
  for (const auto& n : names_) total += params_.at(n).size();
  if (flat.size() != total) flat.assign(total, 0.0);
  std::size_t o = 0;
  for (const auto& n : names_) {
    const auto& t = params_.at(n);
    const auto g = t.grad();
    for (std::size_t i = 0; i < g.size(); ++i) flat[o + i] += static_cast<double>(g[i]);
    o += t.size();
  }
}

template <typename T>
void Network<T>::shift_params(const std::vector<double>& delta, double scale) {
  std::size_t o = 0;
  for (const auto& n : names_) {
    auto v = params_.at(n).mutable_value();
    if (o + v.size() > delta.size()) throw Error(Errc::LengthMismatch, "parameter shift is too short");
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += static_cast<T>(scale * delta[o + i]);
    o += v.size();
  }
  if (o != delta.size()) throw Error(Errc::LengthMismatch, "parameter shift is too long");
}

namespace {

template <typename T>
struct Forward {
  const ModelConfig& cfg;
  const std::function<const Tensor<T>&(const std::string&)>& p;
  irreps::RadialBasis basis;
  Tensor<T> emb;  // [1, c]
  std::size_t c;

  Tensor<T> norm_scale(const std::string& name) const {
    const auto s = tensor::add_rowvec(tensor::matmul_nt(emb, p(name + ".w")), p(name + ".b"));
    const auto ones = Tensor<T>::from({1, c}, std::vector<T>(c, T(1)));
    return tensor::reshape(tensor::add(s, ones), {c});
  }

  // Attention from keys (positions kpos) onto queries (positions qpos).
  // `qindex` selects the query rows among the keys, or is empty when the
  // queries are the keys themselves.
  Tensor<T> block(const std::string& name, const Tensor<T>& f, const std::vector<std::size_t>& qindex,
                  const std::vector<graph::Edge>& edges, const Eigen::Matrix3Xd& kpos,
                  const Eigen::Matrix3Xd& qpos) const {
    const Tensor<T> h = adaptive_norm(f, norm_scale(name + ".norm1"));
    const Tensor<T> hq = qindex.empty() ? h : tensor::gather(h, std::span<const std::size_t>(qindex));
    const Tensor<T> fq = qindex.empty() ? f : tensor::gather(f, std::span<const std::size_t>(qindex));
    const std::size_t nq = hq.dim(0);

    std::vector<EdgeGeom> geo;
    geo.reserve(edges.size());
    for (const auto& e : edges) {
      const Eigen::Vector3d v = qpos.col(static_cast<Eigen::Index>(e.dst)) - kpos.col(static_cast<Eigen::Index>(e.src));
      if (v.norm() < 1e-9) continue;  // coincident points carry no direction
      geo.push_back({e.src, e.dst, irreps::make_edge_frame(v)});
    }
    const EdgeCache cache = EdgeCache::build(std::move(geo), cfg.l_max, basis);

    const auto q = degree_linear(hq, p(name + ".q"));
    const auto k = so2_message(h, cache, p(name + ".k.mix"), p(name + ".k.ra"), p(name + ".k.rb"));
    const auto v = so2_message(h, cache, p(name + ".v.mix"), p(name + ".v.ra"), p(name + ".v.rb"));
    const std::size_t heads = static_cast<std::size_t>(cfg.heads);
    const auto logits = head_logits(q, k, cache.dst, heads);
    const auto alpha = tensor::segment_softmax(logits, std::span<const std::size_t>(cache.dst), nq);
    const auto attn = head_weighted(alpha, v, cache.dst, nq);
    const auto f1 = tensor::add(fq, degree_linear(attn, p(name + ".o")));

    const auto h2 = adaptive_norm(f1, norm_scale(name + ".norm2"));
    const auto x = degree_linear(h2, p(name + ".ff1"));
    const auto y = equivariant_gelu(x, degree_linear(x, p(name + ".gate")),
                                    cfg.literal_elu ? GateMode::literal : GateMode::gate);
    return tensor::add(f1, degree_linear(y, p(name + ".ff2")));
  }
};

Eigen::Matrix3Xd gather_cols(const Eigen::Matrix3Xd& m, const std::vector<std::size_t>& idx) {
  Eigen::Matrix3Xd out(3, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = m.col(static_cast<Eigen::Index>(idx[i]));
  return out;
}

}  // namespace

template <typename T>
Tensor<T> Network<T>::forward(const PieceSet& x, const lie::GroupElementN& g, double tau) const {
  return forward(x, PieceGraph::build(x, cfg_), g, tau);
}

template <typename T>
Tensor<T> Network<T>::forward(const PieceSet& x, const PieceGraph& pg, const lie::GroupElementN& g,
                              double tau) const {
  const std::size_t n = x.size();
  if (g.size() != n || pg.num_pieces != n)
    throw Error(Errc::LengthMismatch, "state, pieces and graph disagree on the piece count");
  const std::size_t c = static_cast<std::size_t>(cfg_.channels);
  const int L = cfg_.l_max;
  const std::size_t comps = static_cast<std::size_t>((L + 1) * (L + 1));

  // World positions of all input points and piece centroids.
  const std::size_t p0 = x.total_points();
  Eigen::Matrix3Xd world(3, static_cast<Eigen::Index>(p0));
  std::vector<Eigen::Vector3d> cent(n, Eigen::Vector3d::Zero());
  {
    Eigen::Index o = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& pc = x.pieces[i];
      for (Eigen::Index j = 0; j < pc.cols(); ++j) world.col(o + j) = g[i] * Eigen::Vector3d(pc.col(j));
      cent[i] = world.middleCols(o, pc.cols()).rowwise().mean();
      o += pc.cols();
    }
  }

  // Input features: degree 0 = (1, 0); degree 1 = (offset to piece centroid, centroid).
  std::vector<T> raw(p0 * comps * 2, T(0));
  for (std::size_t q = 0; q < p0; ++q) {
    const std::size_t i = pg.base_piece[q];
    const Eigen::Vector3d off = world.col(static_cast<Eigen::Index>(q)) - cent[i];
    T* r = raw.data() + q * comps * 2;
    r[0] = T(1);
    for (int a = 0; a < 3; ++a) {
      r[(1 + a) * 2 + 0] = static_cast<T>(off(a));
      r[(1 + a) * 2 + 1] = static_cast<T>(cent[i](a));
    }
  }
  Tensor<T> f = degree_linear(Tensor<T>::from({p0, comps, 2}, std::move(raw)), p("embed"));

  // Time embedding.
  const std::size_t tf = static_cast<std::size_t>(cfg_.time_frequencies);
  std::vector<T> tfeat(2 * tf);
  for (std::size_t k = 0; k < tf; ++k) {
    const double w = std::numbers::pi * std::ldexp(1.0, static_cast<int>(k));
    tfeat[2 * k] = static_cast<T>(std::sin(w * tau));
    tfeat[2 * k + 1] = static_cast<T>(std::cos(w * tau));
  }
  const auto t0 = Tensor<T>::from({1, 2 * tf}, std::move(tfeat));
  const auto t1 = tensor::gelu(tensor::add_rowvec(tensor::matmul_nt(t0, p("time.w1")), p("time.b1")));
  const auto emb = tensor::add_rowvec(tensor::matmul_nt(t1, p("time.w2")), p("time.b2"));

  const std::function<const Tensor<T>&(const std::string&)> lookup = [this](const std::string& s) -> const Tensor<T>& {
    return p(s);
  };
  irreps::RadialBasis basis{cfg_.radial_size, cfg_.radial_cutoff, true};
  Forward<T> fw{cfg_, lookup, basis, emb, c};

  Eigen::Matrix3Xd pos = world;
  std::vector<std::size_t> piece = pg.base_piece;
  for (std::size_t lv = 0; lv < pg.levels.size(); ++lv) {
    const auto& level = pg.levels[lv];
    const Eigen::Matrix3Xd qpos = gather_cols(pos, level.index);
    f = fw.block("down" + std::to_string(lv), f, level.index, level.edges, pos, qpos);
    pos = qpos;
    piece = level.piece;
  }

  graph::Layout top;
  top.pts = pos;
  top.piece = piece;
  top.begin.assign(n + 1, 0);
  for (auto pc : piece) ++top.begin[pc + 1];
  std::partial_sum(top.begin.begin(), top.begin.end(), top.begin.begin());
  const std::size_t k = static_cast<std::size_t>(cfg_.k_neighbors);
  const std::vector<graph::Edge> cross = graph::cross_edges(top, k);
  for (int b = 0; b < cfg_.n_croco_blocks; ++b) {
    const std::string name = "croco" + std::to_string(b);
    f = fw.block(name + ".self", f, {}, pg.top_self_edges, pos, pos);
    f = fw.block(name + ".cross", f, {}, cross, pos, pos);
  }

  const auto h = adaptive_norm(f, fw.norm_scale("head.norm"));
  const auto pooled = tensor::reshape(segment_mean(h, std::span<const std::size_t>(piece), n), {n * comps, c});
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 1; a <= 3; ++a) rows.push_back(i * comps + a);
  const auto vec = tensor::matmul_nt(tensor::gather(pooled, std::span<const std::size_t>(rows)), p("head.w"));
  return twist_head(tensor::reshape(vec, {n, 3, 2}), std::span<const Eigen::Vector3d>(cent));
}

lie::TwistN to_twists(const Tensor<double>& rows) {
  if (rows.rank() != 2 || rows.dim(1) != 6) throw Error(Errc::ShapeMismatch, "twist rows must be [N, 6]");
  lie::TwistN out = lie::TwistN::zero(rows.dim(0));
  const auto v = rows.value();
  for (std::size_t i = 0; i < rows.dim(0); ++i) {
    out[i].w = Eigen::Vector3d(v[i * 6 + 0], v[i * 6 + 1], v[i * 6 + 2]);
    out[i].t = Eigen::Vector3d(v[i * 6 + 3], v[i * 6 + 4], v[i * 6 + 5]);
  }
  return out;
}

template class Network<float>;
template class Network<double>;

}  // namespace asmflow::equinet
