#include "asmflow/equiops.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

#include "asmflow/error.hpp"
#include "asmflow/kernels.hpp"

namespace asmflow::equinet {
namespace {

using tensor::accumulate_target;
using tensor::make_result;
using tensor::Node;

constexpr double kEps = 1e-8;

int degree_of_components(std::size_t comps) {
  const int l = static_cast<int>(std::lround(std::sqrt(static_cast<double>(comps)))) - 1;
  if (l < 0 || static_cast<std::size_t>((l + 1) * (l + 1)) != comps)
    throw Error(Errc::SpecMismatch, "component count is not a full set of degrees");
  return l;
}

template <typename T>
void require_feature(const char* op, const Tensor<T>& f) {
  if (f.rank() != 3) throw Error(Errc::ShapeMismatch, std::string(op) + ": features must be [P, comps, c]");
  (void)degree_of_components(f.dim(1));
}

// y = D x (transpose = false) or D^T x per degree; degree 0 is copied.
template <typename T>
void apply_blocks(int l_max, std::size_t c, const T* d, const T* x, T* y, bool transpose) {
  std::copy_n(x, c, y);
  for (int l = 1; l <= l_max; ++l) {
    const std::size_t n = static_cast<std::size_t>(irreps::degree_dim(l));
    const std::size_t off = static_cast<std::size_t>(irreps::degree_offset(l)) * c;
    if (transpose)
      kernels::gemm_tn(n, c, n, d, n, x + off, c, y + off, c, false);
    else
      kernels::gemm_nn(n, c, n, d, n, x + off, c, y + off, c, false);
    d += n * n;
  }
}

template <typename T>
T std_normal_cdf(T x) {
  return T(0.5) * (T(1) + std::erf(x / std::sqrt(T(2))));
}

template <typename T>
T std_normal_pdf(T x) {
  return std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
}

}  // namespace

EdgeCache EdgeCache::build(std::vector<EdgeGeom> edges, int l_max, const irreps::RadialBasis& basis) {
  EdgeCache c;
  c.l_max = l_max;
  const std::size_t dsz = static_cast<std::size_t>(irreps::packed_wigner_size(l_max));
  const std::size_t nb = static_cast<std::size_t>(basis.size);
  c.wigner.resize(edges.size() * dsz);
  c.radial.resize(edges.size() * nb);
  c.dst.reserve(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    irreps::wigner_d_packed(l_max, edges[e].frame.r_align, c.wigner.data() + e * dsz);
    basis.evaluate(edges[e].frame.dist, c.radial.data() + e * nb);
    c.dst.push_back(edges[e].dst);
  }
  c.edges = std::move(edges);
  return c;
}

// ---- SO(2)-reduced message -------------------------------------------------

template <typename T>
Tensor<T> so2_message(const Tensor<T>& feats, const EdgeCache& cache, const Tensor<T>& mix,
                      const Tensor<T>& radial_a, const Tensor<T>& radial_b) {
  require_feature("so2_message", feats);
  const int L = degree_of_components(feats.dim(1));
  if (L != cache.l_max) throw Error(Errc::SpecMismatch, "edge cache built for another degree");
  const std::size_t c = feats.dim(2), comps = feats.dim(1), per = comps * c, P = feats.dim(0);
  const std::size_t lp = static_cast<std::size_t>(L + 1), ld = lp * c, E = cache.size();
  const std::size_t nb = E ? cache.radial.size() / E : 0;
  if (mix.rank() != 2 || mix.dim(0) != ld || mix.dim(1) != ld || radial_a.rank() != 2 ||
      radial_a.dim(1) != ld || radial_b.rank() != 2 || radial_b.dim(1) != static_cast<std::size_t>(L) * c ||
      (E && (radial_a.dim(0) != nb || radial_b.dim(0) != nb)))
    throw Error(Errc::SpecMismatch, "SO(2) message weights do not match the features");
  for (const auto& e : cache.edges)
    if (e.src >= P) throw Error(Errc::SpecMismatch, "edge source out of range");

  const std::size_t dsz = static_cast<std::size_t>(irreps::packed_wigner_size(L));
  struct Saved {
    std::vector<T> d, phi, a, b, xrot;
    std::vector<std::vector<T>> xm;
  };
  auto sv = std::make_shared<Saved>();
  sv->d.assign(cache.wigner.begin(), cache.wigner.end());
  sv->phi.assign(cache.radial.begin(), cache.radial.end());
  sv->a.resize(E * ld);
  sv->b.resize(E * L * c);
  sv->xrot.resize(E * per);
  sv->xm.resize(lp);
  if (E) {
    kernels::gemm_nn(E, ld, nb, sv->phi.data(), nb, radial_a.value().data(), ld, sv->a.data(), ld, false);
    if (L > 0)
      kernels::gemm_nn(E, L * c, nb, sv->phi.data(), nb, radial_b.value().data(), L * c, sv->b.data(), L * c, false);
  }
  for (std::size_t mu = 0; mu < lp; ++mu) sv->xm[mu].resize(E * (mu ? 2 : 1) * (lp - mu) * c);

  const T* fv = feats.value().data();
  for (std::size_t e = 0; e < E; ++e) {
    T* xr = sv->xrot.data() + e * per;
    apply_blocks<T>(L, c, sv->d.data() + e * dsz, fv + cache.edges[e].src * per, xr, false);
    const T* ae = sv->a.data() + e * ld;
    const T* be = sv->b.data() + e * L * c;
    T* x0 = sv->xm[0].data() + e * ld;
    for (std::size_t l = 0; l < lp; ++l) {
      const T* s = xr + (l * l + l) * c;
      for (std::size_t ch = 0; ch < c; ++ch) x0[l * c + ch] = ae[ch] * s[ch];
    }
    for (std::size_t mu = 1; mu < lp; ++mu) {
      const std::size_t cols = (lp - mu) * c;
      T* xn = sv->xm[mu].data() + 2 * e * cols;
      T* xp = xn + cols;
      const T* a = ae + mu * c;
      const T* b = be + (mu - 1) * c;
      for (std::size_t l = mu; l < lp; ++l) {
        const T* sn = xr + (l * l + l - mu) * c;
        const T* sp = xr + (l * l + l + mu) * c;
        const std::size_t o = (l - mu) * c;
        for (std::size_t ch = 0; ch < c; ++ch) {
          xn[o + ch] = a[ch] * sn[ch] - b[ch] * sp[ch];
          xp[o + ch] = b[ch] * sn[ch] + a[ch] * sp[ch];
        }
      }
    }
  }

  std::vector<T> out(E * per, T(0));
  {
    std::vector<std::vector<T>> zm(lp);
    for (std::size_t mu = 0; mu < lp; ++mu) {
      const std::size_t rows = E * (mu ? 2 : 1), cols = (lp - mu) * c;
      zm[mu].resize(rows * cols);
      if (rows)
        kernels::gemm_nt(rows, cols, cols, sv->xm[mu].data(), cols, mix.value().data() + mu * c * ld + mu * c, ld,
                         zm[mu].data(), cols, false);
    }
    std::vector<T> z(per);
    for (std::size_t e = 0; e < E; ++e) {
      std::fill(z.begin(), z.end(), T(0));
      const T* z0 = zm[0].data() + e * ld;
      for (std::size_t l = 0; l < lp; ++l) std::copy_n(z0 + l * c, c, z.data() + (l * l + l) * c);
      for (std::size_t mu = 1; mu < lp; ++mu) {
        const std::size_t cols = (lp - mu) * c;
        const T* zn = zm[mu].data() + 2 * e * cols;
        const T* zp = zn + cols;
        for (std::size_t l = mu; l < lp; ++l) {
          std::copy_n(zn + (l - mu) * c, c, z.data() + (l * l + l - mu) * c);
          std::copy_n(zp + (l - mu) * c, c, z.data() + (l * l + l + mu) * c);
        }
      }
      apply_blocks<T>(L, c, sv->d.data() + e * dsz, z.data(), out.data() + e * per, true);
    }
  }

  std::vector<std::size_t> src(E);
  for (std::size_t e = 0; e < E; ++e) src[e] = cache.edges[e].src;
  return make_result<T>(
      {E, comps, c}, std::move(out), {feats, mix, radial_a, radial_b},
      [=, src = std::move(src)](Node<T>& self) {
        const T* g = self.grad.data();
        // Back through the final rotation, then split per |m| group.
        std::vector<std::vector<T>> dz(lp);
        for (std::size_t mu = 0; mu < lp; ++mu) dz[mu].resize(E * (mu ? 2 : 1) * (lp - mu) * c);
        std::vector<T> gz(per);
        for (std::size_t e = 0; e < E; ++e) {
          apply_blocks<T>(L, c, sv->d.data() + e * dsz, g + e * per, gz.data(), false);
          T* z0 = dz[0].data() + e * ld;
          for (std::size_t l = 0; l < lp; ++l) std::copy_n(gz.data() + (l * l + l) * c, c, z0 + l * c);
          for (std::size_t mu = 1; mu < lp; ++mu) {
            const std::size_t cols = (lp - mu) * c;
            T* zn = dz[mu].data() + 2 * e * cols;
            T* zp = zn + cols;
            for (std::size_t l = mu; l < lp; ++l) {
              std::copy_n(gz.data() + (l * l + l - mu) * c, c, zn + (l - mu) * c);
              std::copy_n(gz.data() + (l * l + l + mu) * c, c, zp + (l - mu) * c);
            }
          }
        }
        T* gmix = accumulate_target(mix);
        const bool need_x = feats.requires_grad() || radial_a.requires_grad() || radial_b.requires_grad();
        std::vector<std::vector<T>> dx(lp);
        for (std::size_t mu = 0; mu < lp; ++mu) {
          const std::size_t rows = E * (mu ? 2 : 1), cols = (lp - mu) * c;
          if (!rows) continue;
          const T* wsub = mix.value().data() + mu * c * ld + mu * c;
          if (gmix)
            kernels::gemm_tn(cols, cols, rows, dz[mu].data(), cols, sv->xm[mu].data(), cols, gmix + mu * c * ld + mu * c,
                             ld, true);
          if (need_x) {
            dx[mu].resize(rows * cols);
            kernels::gemm_nn(rows, cols, cols, dz[mu].data(), cols, wsub, ld, dx[mu].data(), cols, false);
          }
        }
        if (!need_x) return;

        T* gfeat = accumulate_target(feats);
        std::vector<T> da(E * ld, T(0)), db(E * L * c, T(0)), dxr(per), tmp(per);
        for (std::size_t e = 0; e < E; ++e) {
          const T* xr = sv->xrot.data() + e * per;
          const T* ae = sv->a.data() + e * ld;
          const T* be = sv->b.data() + e * L * c;
          T* dae = da.data() + e * ld;
          T* dbe = db.data() + e * L * c;
          std::fill(dxr.begin(), dxr.end(), T(0));
          const T* dx0 = dx[0].data() + e * ld;
          for (std::size_t l = 0; l < lp; ++l) {
            const std::size_t o = (l * l + l) * c;
            for (std::size_t ch = 0; ch < c; ++ch) {
              dxr[o + ch] += ae[ch] * dx0[l * c + ch];
              dae[ch] += xr[o + ch] * dx0[l * c + ch];
            }
          }
          for (std::size_t mu = 1; mu < lp; ++mu) {
            const std::size_t cols = (lp - mu) * c;
            const T* dn = dx[mu].data() + 2 * e * cols;
            const T* dp = dn + cols;
            const T* a = ae + mu * c;
            const T* b = be + (mu - 1) * c;
            T* dam = dae + mu * c;
            T* dbm = dbe + (mu - 1) * c;
            for (std::size_t l = mu; l < lp; ++l) {
              const std::size_t on = (l * l + l - mu) * c, op = (l * l + l + mu) * c, o = (l - mu) * c;
              for (std::size_t ch = 0; ch < c; ++ch) {
                const T gn = dn[o + ch], gp = dp[o + ch], sn = xr[on + ch], sp = xr[op + ch];
                dxr[on + ch] += a[ch] * gn + b[ch] * gp;
                dxr[op + ch] += -b[ch] * gn + a[ch] * gp;
                dam[ch] += sn * gn + sp * gp;
                dbm[ch] += -sp * gn + sn * gp;
              }
            }
          }
          if (gfeat) {
            apply_blocks<T>(L, c, sv->d.data() + e * dsz, dxr.data(), tmp.data(), true);
            kernels::axpy(T(1), tmp.data(), gfeat + src[e] * per, per);
          }
        }
        if (T* gra = accumulate_target(radial_a))
          kernels::gemm_tn(nb, ld, E, sv->phi.data(), nb, da.data(), ld, gra, ld, true);
        if (L > 0)
          if (T* grb = accumulate_target(radial_b))
            kernels::gemm_tn(nb, L * c, E, sv->phi.data(), nb, db.data(), L * c, grb, L * c, true);
      });
}

// ---- Per-degree linear map -------------------------------------------------

template <typename T>
Tensor<T> degree_linear(const Tensor<T>& feats, const Tensor<T>& w) {
  require_feature("degree_linear", feats);
  const std::size_t P = feats.dim(0), comps = feats.dim(1), cin = feats.dim(2);
  const int L = degree_of_components(comps);
  if (w.rank() != 3 || w.dim(2) != cin || (w.dim(0) != 1 && w.dim(0) != static_cast<std::size_t>(L + 1)))
    throw Error(Errc::ShapeMismatch, "degree_linear: weight shape does not match the features");
  const std::size_t cout = w.dim(1);
  const bool shared = w.dim(0) == 1;
  std::vector<T> out(P * comps * cout);
  const T* fv = feats.value().data();
  const T* wv = w.value().data();
  if (shared) {
    kernels::gemm_nt(P * comps, cout, cin, fv, cin, wv, cin, out.data(), cout, false);
  } else {
    for (std::size_t p = 0; p < P; ++p)
      for (int l = 0; l <= L; ++l) {
        const std::size_t n = static_cast<std::size_t>(2 * l + 1), off = static_cast<std::size_t>(l * l);
        kernels::gemm_nt(n, cout, cin, fv + (p * comps + off) * cin, cin, wv + static_cast<std::size_t>(l) * cout * cin, cin,
                         out.data() + (p * comps + off) * cout, cout, false);
      }
  }
  return make_result<T>({P, comps, cout}, std::move(out), {feats, w}, [=](Node<T>& self) {
    const T* g = self.grad.data();
    const T* fv = feats.value().data();
    const T* wv = w.value().data();
    T* gf = accumulate_target(feats);
    T* gw = accumulate_target(w);
    if (shared) {
      if (gf) kernels::gemm_nn(P * comps, cin, cout, g, cout, wv, cin, gf, cin, true);
      if (gw) kernels::gemm_tn(cout, cin, P * comps, g, cout, fv, cin, gw, cin, true);
      return;
    }
    for (std::size_t p = 0; p < P; ++p)
      for (int l = 0; l <= L; ++l) {
        const std::size_t n = static_cast<std::size_t>(2 * l + 1), off = static_cast<std::size_t>(l * l);
        const T* gb = g + (p * comps + off) * cout;
        const T* wl = wv + static_cast<std::size_t>(l) * cout * cin;
        if (gf) kernels::gemm_nn(n, cin, cout, gb, cout, wl, cin, gf + (p * comps + off) * cin, cin, true);
        if (gw)
          kernels::gemm_tn(cout, cin, n, gb, cout, fv + (p * comps + off) * cin, cin,
                           gw + static_cast<std::size_t>(l) * cout * cin, cin, true);
      }
  });
}

// ---- Attention helpers -------------------------------------------------------

template <typename T>
Tensor<T> head_logits(const Tensor<T>& q, const Tensor<T>& k, std::span<const std::size_t> dst, std::size_t heads) {
  require_feature("head_logits", q);
  require_feature("head_logits", k);
  const std::size_t E = k.dim(0), comps = k.dim(1), c = k.dim(2);
  if (q.dim(1) != comps || q.dim(2) != c || dst.size() != E || heads == 0 || c % heads != 0)
    throw Error(Errc::ShapeMismatch, "head_logits: incompatible query/key shapes");
  for (auto d : dst)
    if (d >= q.dim(0)) throw Error(Errc::ShapeMismatch, "head_logits: destination out of range");
  const std::size_t ch = c / heads, per = comps * c;
  const T scale = T(1) / std::sqrt(static_cast<T>(comps * ch));
  std::vector<T> out(E * heads, T(0));
  const T* qv = q.value().data();
  const T* kv = k.value().data();
  for (std::size_t e = 0; e < E; ++e)
    for (std::size_t i = 0; i < comps; ++i)
      for (std::size_t h = 0; h < heads; ++h)
        out[e * heads + h] += kernels::dot(qv + dst[e] * per + i * c + h * ch, kv + e * per + i * c + h * ch, ch);
  for (auto& v : out) v *= scale;
  std::vector<std::size_t> ds(dst.begin(), dst.end());
  return make_result<T>({E, heads}, std::move(out), {q, k}, [=, ds = std::move(ds)](Node<T>& self) {
    T* gq = accumulate_target(q);
    T* gk = accumulate_target(k);
    const T* qv = q.value().data();
    const T* kv = k.value().data();
    for (std::size_t e = 0; e < E; ++e)
      for (std::size_t h = 0; h < heads; ++h) {
        const T g = self.grad[e * heads + h] * scale;
        for (std::size_t i = 0; i < comps; ++i) {
          const std::size_t oq = ds[e] * per + i * c + h * ch, ok = e * per + i * c + h * ch;
          if (gq) kernels::axpy(g, kv + ok, gq + oq, ch);
          if (gk) kernels::axpy(g, qv + oq, gk + ok, ch);
        }
      }
  });
}

template <typename T>
Tensor<T> head_weighted(const Tensor<T>& alpha, const Tensor<T>& v, std::span<const std::size_t> dst,
                        std::size_t points) {
  require_feature("head_weighted", v);
  const std::size_t E = v.dim(0), comps = v.dim(1), c = v.dim(2);
  if (alpha.rank() != 2 || alpha.dim(0) != E || dst.size() != E || alpha.dim(1) == 0 || c % alpha.dim(1) != 0)
    throw Error(Errc::ShapeMismatch, "head_weighted: incompatible shapes");
  for (auto d : dst)
    if (d >= points) throw Error(Errc::ShapeMismatch, "head_weighted: destination out of range");
  const std::size_t heads = alpha.dim(1), ch = c / heads, per = comps * c;
  std::vector<T> out(points * per, T(0));
  const T* av = alpha.value().data();
  const T* vv = v.value().data();
  for (std::size_t e = 0; e < E; ++e)
    for (std::size_t i = 0; i < comps; ++i)
      for (std::size_t h = 0; h < heads; ++h)
        kernels::axpy(av[e * heads + h], vv + e * per + i * c + h * ch, out.data() + dst[e] * per + i * c + h * ch, ch);
  std::vector<std::size_t> ds(dst.begin(), dst.end());
  return make_result<T>({points, comps, c}, std::move(out), {alpha, v}, [=, ds = std::move(ds)](Node<T>& self) {
    T* ga = accumulate_target(alpha);
    T* gv = accumulate_target(v);
    const T* av = alpha.value().data();
    const T* vv = v.value().data();
    for (std::size_t e = 0; e < E; ++e)
      for (std::size_t i = 0; i < comps; ++i)
        for (std::size_t h = 0; h < heads; ++h) {
          const T* go = self.grad.data() + ds[e] * per + i * c + h * ch;
          if (ga) ga[e * heads + h] += kernels::dot(go, vv + e * per + i * c + h * ch, ch);
          if (gv) kernels::axpy(av[e * heads + h], go, gv + e * per + i * c + h * ch, ch);
        }
  });
}

// ---- Equivariant GELU ------------------------------------------------------

template <typename T>
Tensor<T> equivariant_gelu(const Tensor<T>& f, const Tensor<T>& g, GateMode mode) {
  require_feature("equivariant_gelu", f);
  if (f.shape() != g.shape()) throw Error(Errc::ShapeMismatch, "equivariant_gelu: gate input shape differs");
  const std::size_t P = f.dim(0), comps = f.dim(1), c = f.dim(2);
  const int L = degree_of_components(comps);
  const T eps = T(kEps);
  // Invariants per (point, degree, channel): s and |G|.
  const std::size_t slots = P * static_cast<std::size_t>(L + 1) * c;
  auto s = std::make_shared<std::vector<T>>(slots);
  auto nr = std::make_shared<std::vector<T>>(slots);
  const T* fv = f.value().data();
  const T* gv = g.value().data();
  std::vector<T> out(f.size());
  for (std::size_t p = 0; p < P; ++p)
    for (int l = 0; l <= L; ++l)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t slot = (p * static_cast<std::size_t>(L + 1) + static_cast<std::size_t>(l)) * c + ch;
        T g2 = 0, fg = 0;
        for (int m = 0; m < 2 * l + 1; ++m) {
          const std::size_t i = (p * comps + static_cast<std::size_t>(l * l + m)) * c + ch;
          g2 += gv[i] * gv[i];
          fg += fv[i] * gv[i];
        }
        const T n = std::sqrt(g2 + eps * eps);
        const T sv = fg / n;
        (*s)[slot] = sv;
        (*nr)[slot] = n;
        const T gate = std_normal_cdf(sv);
        for (int m = 0; m < 2 * l + 1; ++m) {
          const std::size_t i = (p * comps + static_cast<std::size_t>(l * l + m)) * c + ch;
          out[i] = mode == GateMode::gate ? fv[i] * gate : sv * gate * gv[i] / n;
        }
      }
  return make_result<T>(f.shape(), std::move(out), {f, g}, [=](Node<T>& self) {
    T* gf = accumulate_target(f);
    T* gg = accumulate_target(g);
    const T* fv = f.value().data();
    const T* gv = g.value().data();
    const T* go = self.grad.data();
    for (std::size_t p = 0; p < P; ++p)
      for (int l = 0; l <= L; ++l)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t slot = (p * static_cast<std::size_t>(L + 1) + static_cast<std::size_t>(l)) * c + ch;
          const T sv = (*s)[slot], n = (*nr)[slot];
          const T cdf = std_normal_cdf(sv), pdf = std_normal_pdf(sv);
          auto at = [&](int m) { return (p * comps + static_cast<std::size_t>(l * l + m)) * c + ch; };
          if (mode == GateMode::gate) {
            T gs = 0;
            for (int m = 0; m < 2 * l + 1; ++m) gs += go[at(m)] * fv[at(m)];
            gs *= pdf;
            for (int m = 0; m < 2 * l + 1; ++m) {
              const std::size_t i = at(m);
              const T u = gv[i] / n;
              if (gf) gf[i] += go[i] * cdf + gs * u;
              if (gg) gg[i] += gs * (fv[i] - sv * u) / n;
            }
          } else {
            const T gel = sv * cdf, dgel = cdf + sv * pdf;
            T gu = 0;
            for (int m = 0; m < 2 * l + 1; ++m) gu += go[at(m)] * gv[at(m)] / n;
            const T gs = dgel * gu;
            for (int m = 0; m < 2 * l + 1; ++m) {
              const std::size_t i = at(m);
              const T u = gv[i] / n;
              if (gf) gf[i] += gs * u;
              if (gg) gg[i] += gs * (fv[i] - sv * u) / n + gel * (go[i] - u * gu) / n;
            }
          }
        }
  });
}

// ---- Adaptive normalization ------------------------------------------------

template <typename T>
Tensor<T> adaptive_norm(const Tensor<T>& f, const Tensor<T>& scale) {
  require_feature("adaptive_norm", f);
  const std::size_t P = f.dim(0), comps = f.dim(1), c = f.dim(2);
  const int L = degree_of_components(comps);
  if (scale.size() != c) throw Error(Errc::ShapeMismatch, "adaptive_norm: scale must have one entry per channel");
  const T eps = T(kEps);
  auto sig = std::make_shared<std::vector<T>>(P);
  auto rho = std::make_shared<std::vector<T>>(P);
  const T* fv = f.value().data();
  const T* sc = scale.value().data();
  std::vector<T> out(f.size());
  for (std::size_t p = 0; p < P; ++p) {
    const T* fp = fv + p * comps * c;
    T r2 = kernels::dot(fp, fp, c) / static_cast<T>(c);
    T s2 = 0;
    for (int l = 1; l <= L; ++l) {
      const std::size_t off = static_cast<std::size_t>(l * l) * c, n = static_cast<std::size_t>(2 * l + 1) * c;
      s2 += kernels::dot(fp + off, fp + off, n) / static_cast<T>(2 * l + 1);
    }
    if (L > 0) s2 /= static_cast<T>(c * static_cast<std::size_t>(L));
    const T r = std::sqrt(r2 + eps * eps), s = std::sqrt(s2 + eps * eps);
    (*rho)[p] = r;
    (*sig)[p] = s;
    T* op = out.data() + p * comps * c;
    for (std::size_t i = 0; i < comps; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) op[i * c + ch] = fp[i * c + ch] / (i == 0 ? r : s) * sc[ch];
  }
  return make_result<T>(f.shape(), std::move(out), {f, scale}, [=](Node<T>& self) {
    T* gf = accumulate_target(f);
    T* gs = accumulate_target(scale);
    const T* fv = f.value().data();
    const T* sc = scale.value().data();
    for (std::size_t p = 0; p < P; ++p) {
      const T* fp = fv + p * comps * c;
      const T* go = self.grad.data() + p * comps * c;
      const T r = (*rho)[p], s = (*sig)[p];
      if (gs)
        for (std::size_t i = 0; i < comps; ++i)
          for (std::size_t ch = 0; ch < c; ++ch) gs[ch] += go[i * c + ch] * fp[i * c + ch] / (i == 0 ? r : s);
      if (!gf) continue;
      T* gp = gf + p * comps * c;
      // Degree 0: y = f / r with r^2 = mean(f^2) + eps^2.
      T dot0 = 0;
      for (std::size_t ch = 0; ch < c; ++ch) dot0 += go[ch] * sc[ch] * fp[ch];
      for (std::size_t ch = 0; ch < c; ++ch)
        gp[ch] += go[ch] * sc[ch] / r - dot0 * fp[ch] / (static_cast<T>(c) * r * r * r);
      if (L == 0) continue;
      T dot1 = 0;
      for (std::size_t i = 1; i < comps; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) dot1 += go[i * c + ch] * sc[ch] * fp[i * c + ch];
      const T denom = static_cast<T>(c * static_cast<std::size_t>(L)) * s * s * s;
      for (int l = 1; l <= L; ++l) {
        const T wl = T(1) / static_cast<T>(2 * l + 1);
        for (int m = 0; m < 2 * l + 1; ++m) {
          const std::size_t i = static_cast<std::size_t>(l * l + m);
          for (std::size_t ch = 0; ch < c; ++ch)
            gp[i * c + ch] += go[i * c + ch] * sc[ch] / s - dot1 * fp[i * c + ch] * wl / denom;
        }
      }
    }
  });
}

// ---- Pooling and head ------------------------------------------------------

template <typename T>
Tensor<T> segment_mean(const Tensor<T>& x, std::span<const std::size_t> segment, std::size_t segments) {
  if (x.rank() == 0 || x.dim(0) != segment.size()) throw Error(Errc::ShapeMismatch, "segment_mean: row count mismatch");
  const std::size_t rows = x.dim(0), d = rows ? x.size() / rows : 0;
  std::vector<std::size_t> count(segments, 0);
  for (auto s : segment) {
    if (s >= segments) throw Error(Errc::ShapeMismatch, "segment_mean: segment out of range");
    ++count[s];
  }
  for (auto n : count)
    if (n == 0) throw Error(Errc::EmptyNeighborhood, "segment_mean: empty segment");
  std::vector<T> out(segments * d, T(0));
  for (std::size_t r = 0; r < rows; ++r)
    kernels::axpy(T(1) / static_cast<T>(count[segment[r]]), x.value().data() + r * d, out.data() + segment[r] * d, d);
  tensor::Shape shape = x.shape();
  shape[0] = segments;
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return make_result<T>(std::move(shape), std::move(out), {x}, [=, seg = std::move(seg)](Node<T>& self) {
    T* gx = accumulate_target(x);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r)
      kernels::axpy(T(1) / static_cast<T>(count[seg[r]]), self.grad.data() + seg[r] * d, gx + r * d, d);
  });
}

template <typename T>
Tensor<T> twist_head(const Tensor<T>& wu, std::span<const Eigen::Vector3d> centroids) {
  if (wu.rank() != 3 || wu.dim(1) != 3 || wu.dim(2) != 2 || wu.dim(0) != centroids.size())
    throw Error(Errc::ShapeMismatch, "twist_head expects [N, 3, 2] and N centroids");
  const std::size_t n = wu.dim(0);
  std::vector<Eigen::Vector3d> cs(centroids.begin(), centroids.end());
  std::vector<T> out(n * 6);
  const T* v = wu.value().data();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d w(v[i * 6 + 0], v[i * 6 + 2], v[i * 6 + 4]);
    const Eigen::Vector3d u(v[i * 6 + 1], v[i * 6 + 3], v[i * 6 + 5]);
    const Eigen::Vector3d t = u - w.cross(cs[i]);
    for (int a = 0; a < 3; ++a) {
      out[i * 6 + a] = static_cast<T>(w(a));
      out[i * 6 + 3 + a] = static_cast<T>(t(a));
    }
  }
  return make_result<T>({n, 6}, std::move(out), {wu}, [=, cs = std::move(cs)](Node<T>& self) {
    T* g = accumulate_target(wu);
    if (!g) return;
    for (std::size_t i = 0; i < n; ++i) {
      const T* go = self.grad.data() + i * 6;
      const Eigen::Vector3d gw(go[0], go[1], go[2]), gt(go[3], go[4], go[5]);
      // t = u + c x w, so dL/dw gains hat(c)^T gt = gt x c.
      const Eigen::Vector3d dw = gw + gt.cross(cs[i]);
      for (int a = 0; a < 3; ++a) {
        g[i * 6 + 2 * a] += static_cast<T>(dw(a));
        g[i * 6 + 2 * a + 1] += static_cast<T>(gt(a));
      }
    }
  });
}

#define ASMFLOW_EQUIOPS_INSTANTIATE(T)                                                                   \
  template Tensor<T> so2_message<T>(const Tensor<T>&, const EdgeCache&, const Tensor<T>&, const Tensor<T>&, \
                                    const Tensor<T>&);                                                   \
  template Tensor<T> degree_linear<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> head_logits<T>(const Tensor<T>&, const Tensor<T>&, std::span<const std::size_t>,    \
                                    std::size_t);                                                        \
  template Tensor<T> head_weighted<T>(const Tensor<T>&, const Tensor<T>&, std::span<const std::size_t>,  \
                                      std::size_t);                                                      \
  template Tensor<T> equivariant_gelu<T>(const Tensor<T>&, const Tensor<T>&, GateMode);                  \
  template Tensor<T> adaptive_norm<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> segment_mean<T>(const Tensor<T>&, std::span<const std::size_t>, std::size_t);       \
  template Tensor<T> twist_head<T>(const Tensor<T>&, std::span<const Eigen::Vector3d>);

ASMFLOW_EQUIOPS_INSTANTIATE(float)
ASMFLOW_EQUIOPS_INSTANTIATE(double)

}  // namespace asmflow::equinet
