#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "asmflow/error.hpp"
#include "asmflow/irreps.hpp"
#include "asmflow/kernels.hpp"

namespace asmflow::irreps {
namespace {

constexpr std::size_t kChunk = 256;

void check_spec(const IrrepsSpec& spec) {
  if (spec.l_max < 0 || spec.channels < 1) throw Error(Errc::SpecMismatch, "invalid irreps spec");
  if (2 * spec.l_max > kMaxDegree)
    throw Error(Errc::SpecMismatch, "edge harmonics need degree 2*l_max <= 4");
}

void check_sizes(std::span<const double> feats, std::span<const MessageEdge> edges,
                 std::span<double> out, const IrrepsSpec& spec) {
  const std::size_t per = static_cast<std::size_t>(spec.components() * spec.channels);
  if (feats.size() % per != 0 || out.size() != edges.size() * per)
    throw Error(Errc::SpecMismatch, "message buffers do not match the irreps spec");
  const std::size_t points = feats.size() / per;
  for (const auto& e : edges)
    if (e.src >= points) throw Error(Errc::SpecMismatch, "edge source out of range");
}

// y[l] = D_l x[l] (transpose = false) or D_l^T x[l] (transpose = true) for
// features stored component-major with c channels; dblocks as produced by
// wigner_d_packed.
void apply_blocks(int l_max, int c, const double* dblocks, const double* x, double* y,
                  bool transpose) {
  std::copy_n(x, c, y);
  const double* dl = dblocks;
  const std::size_t cc = static_cast<std::size_t>(c);
  for (int l = 1; l <= l_max; ++l) {
    const std::size_t n = static_cast<std::size_t>(degree_dim(l)), off = static_cast<std::size_t>(degree_offset(l));
    if (transpose)
      kernels::gemm_tn(n, cc, n, dl, n, x + off * cc, cc, y + off * cc, cc, false);
    else
      kernels::gemm_nn(n, cc, n, dl, n, x + off * cc, cc, y + off * cc, cc, false);
    dl += n * n;
  }
}

// phi[e * size + k] for the edges of one chunk.
void radial_features(const RadialBasis& basis, std::span<const MessageEdge> edges, std::vector<double>& phi) {
  const std::size_t nb = static_cast<std::size_t>(basis.size);
  phi.resize(edges.size() * nb);
  for (std::size_t e = 0; e < edges.size(); ++e) basis.evaluate(edges[e].frame.dist, phi.data() + e * nb);
}

// out[e, j] = sum_k phi[e, k] coeff(k, j) with coeff column-major (size x cols).
void radial_coefficients(const std::vector<double>& phi, std::size_t ne, const MatrixXd& coeff,
                         std::vector<double>& out) {
  const std::size_t nb = static_cast<std::size_t>(coeff.rows()), cols = static_cast<std::size_t>(coeff.cols());
  out.resize(ne * cols);
  if (cols == 0) return;
  kernels::gemm_nt(ne, cols, nb, phi.data(), nb, coeff.data(), nb, out.data(), cols, false);
}

}  // namespace

So2Weights So2Weights::random(IrrepsSpec spec, RadialBasis basis, lie::Rng& rng) {
  check_spec(spec);
  std::normal_distribution<double> n01(0.0, 1.0);
  const int c = spec.channels, lp = spec.l_max + 1;
  So2Weights w{spec, basis, MatrixXd(lp * c, lp * c), MatrixXd(basis.size, lp * c),
               MatrixXd(basis.size, std::max(spec.l_max, 0) * c)};
  const double ms = 1.0 / std::sqrt(static_cast<double>(lp * c));
  for (Eigen::Index j = 0; j < w.mix.cols(); ++j)
    for (Eigen::Index i = 0; i < w.mix.rows(); ++i) w.mix(i, j) = ms * n01(rng);
  for (Eigen::Index j = 0; j < w.radial_a.cols(); ++j)
    for (Eigen::Index i = 0; i < w.radial_a.rows(); ++i) w.radial_a(i, j) = n01(rng);
  for (Eigen::Index j = 0; j < w.radial_b.cols(); ++j)
    for (Eigen::Index i = 0; i < w.radial_b.rows(); ++i) w.radial_b(i, j) = n01(rng);
  return w;
}

void So2Weights::validate() const {
  check_spec(spec);
  const int c = spec.channels, lp = spec.l_max + 1;
  if (mix.rows() != lp * c || mix.cols() != lp * c || radial_a.rows() != basis.size ||
      radial_a.cols() != lp * c || radial_b.rows() != basis.size || radial_b.cols() != spec.l_max * c)
    throw Error(Errc::SpecMismatch, "SO(2) weights do not match their spec");
}

std::vector<TpPath> tp_paths(int l_max) {
  std::vector<TpPath> paths;
  for (int lo = 0; lo <= l_max; ++lo)
    for (int li = 0; li <= l_max; ++li)
      for (int le = std::abs(lo - li); le <= lo + li; ++le) paths.push_back({lo, le, li});
  return paths;
}

MatrixXd so2_path_coordinates(int l_out, int l_in) {
  const int k = std::min(l_out, l_in);
  const int lo_e = std::abs(l_out - l_in);
  const Eigen::VectorXd yaxis_all = [&] {
    Eigen::VectorXd y(num_components(kMaxDegree));
    sph_harm_all(kMaxDegree, Vec3::UnitY(), y.data());
    return y;
  }();
  MatrixXd g(2 * k + 1, 2 * k + 1);
  for (int j = 0; j < 2 * k + 1; ++j) {
    const int le = lo_e + j;
    const auto& cg = clebsch_gordan(le, l_in, l_out);
    MatrixXd t = MatrixXd::Zero(degree_dim(l_out), degree_dim(l_in));
    for (int a = 0; a < degree_dim(le); ++a) {
      const double ya = yaxis_all(degree_offset(le) + a);
      if (ya == 0.0) continue;
      for (int b = 0; b < degree_dim(l_in); ++b)
        for (int c = 0; c < degree_dim(l_out); ++c) t(c, b) += cg(a, b, c) * ya;
    }
    g(0, j) = t(l_out, l_in);
    for (int mu = 1; mu <= k; ++mu) {
      g(mu, j) = 0.5 * (t(l_out + mu, l_in + mu) + t(l_out - mu, l_in - mu));
      g(k + mu, j) = 0.5 * (t(l_out + mu, l_in - mu) - t(l_out - mu, l_in + mu));
    }
  }
  return g;
}

TpWeights tp_weights_from_so2(const So2Weights& so2) {
  so2.validate();
  const int c = so2.spec.channels;
  TpWeights tp;
  tp.spec = so2.spec;
  tp.basis = so2.basis;
  tp.paths = tp_paths(so2.spec.l_max);
  for (const auto& p : tp.paths) {
    tp.mix.push_back(so2.mix.block(p.l_out * c, p.l_in * c, c, c));
    const int k = std::min(p.l_out, p.l_in);
    const MatrixXd ginv = so2_path_coordinates(p.l_out, p.l_in).inverse();
    const int row = p.l_edge - std::abs(p.l_out - p.l_in);
    MatrixXd rad(so2.basis.size, c);
    for (int kb = 0; kb < so2.basis.size; ++kb)
      for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int mu = 0; mu <= k; ++mu) s += ginv(row, mu) * so2.radial_a(kb, mu * c + ch);
        for (int mu = 1; mu <= k; ++mu) s += ginv(row, k + mu) * so2.radial_b(kb, (mu - 1) * c + ch);
        rad(kb, ch) = s;
      }
    tp.radial.push_back(std::move(rad));
  }
  return tp;
}

void so2_messages(std::span<const double> feats, std::span<const MessageEdge> edges,
                  const So2Weights& w, std::span<double> out) {
  w.validate();
  check_sizes(feats, edges, out, w.spec);
  const int L = w.spec.l_max, c = w.spec.channels, comps = w.spec.components();
  const std::size_t per = static_cast<std::size_t>(comps * c);
  const std::size_t ldw = static_cast<std::size_t>((L + 1) * c);
  const double* wt = w.mix.data();  // column-major mix == row-major mix^T

  const std::size_t dsz = static_cast<std::size_t>(packed_wigner_size(L));
  std::vector<double> dall, phi, acoef, bcoef, xrot(per), zfull(per);
  std::vector<std::vector<double>> xm(static_cast<std::size_t>(L + 1)), zm(static_cast<std::size_t>(L + 1));

  for (std::size_t e0 = 0; e0 < edges.size(); e0 += kChunk) {
    const std::size_t ne = std::min(kChunk, edges.size() - e0);
    const auto chunk = edges.subspan(e0, ne);
    dall.resize(ne * dsz);
    for (int mu = 0; mu <= L; ++mu) {
      const std::size_t rows = ne * (mu == 0 ? 1 : 2);
      const std::size_t cols = static_cast<std::size_t>((L + 1 - mu) * c);
      xm[mu].resize(rows * cols);
      zm[mu].resize(rows * cols);
    }
    radial_features(w.basis, chunk, phi);
    radial_coefficients(phi, ne, w.radial_a, acoef);
    radial_coefficients(phi, ne, w.radial_b, bcoef);

    for (std::size_t e = 0; e < ne; ++e) {
      const MessageEdge& edge = chunk[e];
      double* de = dall.data() + e * dsz;
      wigner_d_packed(L, edge.frame.r_align, de);
      apply_blocks(L, c, de, feats.data() + edge.src * per, xrot.data(), false);
      const double* ae = acoef.data() + e * static_cast<std::size_t>((L + 1) * c);
      const double* be = bcoef.data() + e * static_cast<std::size_t>(L * c);

      // Rotation-form coefficients, laid out per |m| group.
      double* x0 = xm[0].data() + e * static_cast<std::size_t>((L + 1) * c);
      for (int l = 0; l <= L; ++l) {
        const double* src = xrot.data() + static_cast<std::size_t>(degree_offset(l) + l) * c;
        for (int ch = 0; ch < c; ++ch) x0[l * c + ch] = ae[ch] * src[ch];
      }
      for (int mu = 1; mu <= L; ++mu) {
        const std::size_t cols = static_cast<std::size_t>((L + 1 - mu) * c);
        double* xneg = xm[mu].data() + (2 * e) * cols;
        double* xpos = xneg + cols;
        const double* a = ae + mu * c;
        const double* b = be + (mu - 1) * c;
        for (int l = mu; l <= L; ++l) {
          const double* sn = xrot.data() + static_cast<std::size_t>(degree_offset(l) + l - mu) * c;
          const double* sp = xrot.data() + static_cast<std::size_t>(degree_offset(l) + l + mu) * c;
          const std::size_t o = static_cast<std::size_t>((l - mu) * c);
          for (int ch = 0; ch < c; ++ch) {
            xneg[o + ch] = a[ch] * sn[ch] - b[ch] * sp[ch];
            xpos[o + ch] = b[ch] * sn[ch] + a[ch] * sp[ch];
          }
        }
      }
    }

    // Shared channel/degree mixing, one GEMM per |m| group.
    for (int mu = 0; mu <= L; ++mu) {
      const std::size_t rows = ne * (mu == 0 ? 1 : 2);
      const std::size_t cols = static_cast<std::size_t>((L + 1 - mu) * c);
      const double* wsub = wt + static_cast<std::size_t>(mu * c) * ldw + static_cast<std::size_t>(mu * c);
      kernels::gemm_nn(rows, cols, cols, xm[mu].data(), cols, wsub, ldw, zm[mu].data(), cols, false);
    }

    for (std::size_t e = 0; e < ne; ++e) {
      std::fill(zfull.begin(), zfull.end(), 0.0);
      const double* z0 = zm[0].data() + e * static_cast<std::size_t>((L + 1) * c);
      for (int l = 0; l <= L; ++l)
        std::copy_n(z0 + l * c, c, zfull.data() + static_cast<std::size_t>(degree_offset(l) + l) * c);
      for (int mu = 1; mu <= L; ++mu) {
        const std::size_t cols = static_cast<std::size_t>((L + 1 - mu) * c);
        const double* zneg = zm[mu].data() + (2 * e) * cols;
        const double* zpos = zneg + cols;
        for (int l = mu; l <= L; ++l) {
          std::copy_n(zneg + (l - mu) * c, c, zfull.data() + static_cast<std::size_t>(degree_offset(l) + l - mu) * c);
          std::copy_n(zpos + (l - mu) * c, c, zfull.data() + static_cast<std::size_t>(degree_offset(l) + l + mu) * c);
        }
      }
      apply_blocks(L, c, dall.data() + e * dsz, zfull.data(), out.data() + (e0 + e) * per, true);
    }
  }
}

void tp_messages(std::span<const double> feats, std::span<const MessageEdge> edges,
                 const TpWeights& w, std::span<double> out) {
  check_spec(w.spec);
  check_sizes(feats, edges, out, w.spec);
  if (w.mix.size() != w.paths.size() || w.radial.size() != w.paths.size())
    throw Error(Errc::SpecMismatch, "tensor-product weights are incomplete");
  const int L = w.spec.l_max, c = w.spec.channels, comps = w.spec.components();
  const std::size_t per = static_cast<std::size_t>(comps * c);
  const int edge_l = 2 * L;
  std::fill(out.begin(), out.end(), 0.0);

  std::vector<const CouplingTensor*> cgs;
  for (const auto& p : w.paths) cgs.push_back(&clebsch_gordan(p.l_edge, p.l_in, p.l_out));

  const std::size_t nsh = static_cast<std::size_t>(num_components(edge_l));
  std::vector<double> sh;
  std::vector<double> phi, gamma, t, u, v;

  for (std::size_t e0 = 0; e0 < edges.size(); e0 += kChunk) {
    const std::size_t ne = std::min(kChunk, edges.size() - e0);
    radial_features(w.basis, edges.subspan(e0, ne), phi);
    sh.resize(ne * nsh);
    for (std::size_t e = 0; e < ne; ++e) sph_harm_all(edge_l, edges[e0 + e].frame.dir, sh.data() + e * nsh);
    for (std::size_t pi = 0; pi < w.paths.size(); ++pi) {
      radial_coefficients(phi, ne, w.radial[pi], gamma);
      const TpPath& p = w.paths[pi];
      const CouplingTensor& cg = *cgs[pi];
      const int no = degree_dim(p.l_out), ni = degree_dim(p.l_in), nedge = degree_dim(p.l_edge);
      u.assign(ne * static_cast<std::size_t>(no * c), 0.0);
      t.resize(static_cast<std::size_t>(no * ni));
      for (std::size_t e = 0; e < ne; ++e) {
        const MessageEdge& edge = edges[e0 + e];
        const double* y = sh.data() + e * nsh + degree_offset(p.l_edge);
        std::fill(t.begin(), t.end(), 0.0);
        for (int a = 0; a < nedge; ++a)
          for (int b = 0; b < ni; ++b)
            for (int cc = 0; cc < no; ++cc) t[cc * ni + b] += cg(a, b, cc) * y[a];

        const double* ge = gamma.data() + e * static_cast<std::size_t>(c);
        const double* f = feats.data() + edge.src * per + static_cast<std::size_t>(degree_offset(p.l_in)) * c;
        double* ue = u.data() + e * static_cast<std::size_t>(no * c);
        for (int i = 0; i < no; ++i) {
          double* ui = ue + i * c;
          for (int j = 0; j < ni; ++j) kernels::axpy(t[i * ni + j], f + j * c, ui, static_cast<std::size_t>(c));
          for (int ch = 0; ch < c; ++ch) ui[ch] *= ge[ch];
        }
      }
      // Per-path channel mixing across the whole chunk.
      v.resize(u.size());
      kernels::gemm_nn(ne * no, c, c, u.data(), c, w.mix[pi].data(), c, v.data(), c, false);
      for (std::size_t e = 0; e < ne; ++e) {
        double* o = out.data() + (e0 + e) * per + static_cast<std::size_t>(degree_offset(p.l_out)) * c;
        kernels::axpy(1.0, v.data() + e * static_cast<std::size_t>(no * c), o, static_cast<std::size_t>(no * c));
      }
    }
  }
}

IrrepsFeature so2_reduced_message(const IrrepsFeature& f, const EdgeFrame& edge, const So2Weights& w) {
  if (!(f.spec() == w.spec)) throw Error(Errc::SpecMismatch, "feature spec differs from weights");
  IrrepsFeature out(w.spec);
  const MessageEdge me{0, edge};
  so2_messages({f.data().data(), static_cast<std::size_t>(f.data().size())}, {&me, 1}, w,
               {out.data().data(), static_cast<std::size_t>(out.data().size())});
  return out;
}

IrrepsFeature tp_message(const IrrepsFeature& f, const EdgeFrame& edge, const TpWeights& w) {
  if (!(f.spec() == w.spec)) throw Error(Errc::SpecMismatch, "feature spec differs from weights");
  IrrepsFeature out(w.spec);
  const MessageEdge me{0, edge};
  tp_messages({f.data().data(), static_cast<std::size_t>(f.data().size())}, {&me, 1}, w,
              {out.data().data(), static_cast<std::size_t>(out.data().size())});
  return out;
}

}  // namespace asmflow::irreps
