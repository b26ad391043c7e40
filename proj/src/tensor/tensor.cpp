#include "asmflow/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <limits>

#include "asmflow/error.hpp"
#include "asmflow/kernels.hpp"

namespace asmflow::tensor {
namespace {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw Error(Errc::ShapeMismatch, std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

template <typename T>
void require_rank(const char* op, const Tensor<T>& t, std::size_t r) {
  if (t.rank() != r) {
    std::ostringstream os;
    os << op << ": expected rank " << r << ", got " << shape_str(t.shape());
    throw Error(Errc::ShapeMismatch, os.str());
  }
}

template <typename T>
void require_same(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
}

template <typename T>
thread_local Tape<T>* g_active = nullptr;

}  // namespace

std::size_t numel(const Shape& s) noexcept {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

// ---- Tensor ----------------------------------------------------------------

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  auto n = std::make_shared<Node<T>>();
  n->value.assign(numel(shape), T(0));
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (values.size() != numel(shape))
    throw Error(Errc::ShapeMismatch, "buffer of " + std::to_string(values.size()) +
                                         " values for shape " + shape_str(shape));
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T v, bool requires_grad) {
  return from({}, {v}, requires_grad);
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(n_->grad.begin(), n_->grad.end(), T(0));
}

template <typename T>
T Tensor<T>::item() const {
  if (n_->value.size() != 1) throw Error(Errc::ShapeMismatch, "item() on " + shape_str(n_->shape));
  return n_->value[0];
}

// ---- Tape ------------------------------------------------------------------

template <typename T>
Tape<T>* active_tape() noexcept {
  return g_active<T>;
}

template <typename T>
TapeScope<T>::TapeScope(Tape<T>& tape) : previous_(g_active<T>) {
  g_active<T> = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
  g_active<T> = previous_;
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw Error(Errc::ShapeMismatch, "backward needs a scalar loss");
  Node<T>* root = loss.node();
  if (!root->requires_grad || root->leaf) {
    if (root->leaf && root->requires_grad) {
      root->grad_buffer()[0] += T(1);
      return;
    }
    throw Error(Errc::DisconnectedGraph, "loss does not depend on any differentiable input");
  }
  auto it = std::find_if(nodes_.begin(), nodes_.end(), [&](const auto& n) { return n.get() == root; });
  if (it == nodes_.end()) throw Error(Errc::DisconnectedGraph, "loss was not recorded on this tape");
  const std::size_t last = static_cast<std::size_t>(it - nodes_.begin());

  for (std::size_t i = 0; i <= last; ++i) nodes_[i]->grad.clear();
  root->grad_buffer()[0] = T(1);
  for (std::size_t i = last + 1; i-- > 0;) {
    Node<T>& n = *nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(n);
  }
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const std::vector<Tensor<T>>& parents,
                      std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->leaf = false;
  Tape<T>* tape = g_active<T>;
  const bool track =
      tape && std::any_of(parents.begin(), parents.end(), [](const Tensor<T>& p) { return p.requires_grad(); });
  if (track) {
    n->requires_grad = true;
    n->backward = std::move(backward);
    tape->record(n);
  }
  return Tensor<T>(std::move(n));
}

template <typename T>
T* accumulate_target(const Tensor<T>& t) {
  if (!t.requires_grad()) return nullptr;
  return t.node()->grad_buffer().data();
}

// ---- Generic operations ------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) shape_error("matmul", a.shape(), b.shape());
  std::vector<T> out(m * n);
  kernels::gemm_nn(m, n, k, a.value().data(), k, b.value().data(), n, out.data(), n, false);
  return make_result<T>({m, n}, std::move(out), {a, b}, [a, b, m, n, k](Node<T>& self) {
    const T* g = self.grad.data();
    if (T* ga = accumulate_target(a)) kernels::gemm_nt(m, k, n, g, n, b.value().data(), n, ga, k, true);
    if (T* gb = accumulate_target(b)) kernels::gemm_tn(k, n, m, a.value().data(), k, g, n, gb, n, true);
  });
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank("matmul_nt", a, 2);
  require_rank("matmul_nt", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) shape_error("matmul_nt", a.shape(), b.shape());
  std::vector<T> out(m * n);
  kernels::gemm_nt(m, n, k, a.value().data(), k, b.value().data(), k, out.data(), n, false);
  return make_result<T>({m, n}, std::move(out), {a, b}, [a, b, m, n, k](Node<T>& self) {
    const T* g = self.grad.data();
    if (T* ga = accumulate_target(a)) kernels::gemm_nn(m, k, n, g, n, b.value().data(), k, ga, k, true);
    if (T* gb = accumulate_target(b)) kernels::gemm_tn(n, k, m, g, n, a.value().data(), k, gb, k, true);
  });
}

template <typename T>
Tensor<T> batch_contract(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank("batch_contract", a, 3);
  require_rank("batch_contract", b, 3);
  const std::size_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  if (b.dim(0) != bs || b.dim(1) != k) shape_error("batch_contract", a.shape(), b.shape());
  std::vector<T> out(bs * m * n);
  for (std::size_t i = 0; i < bs; ++i)
    kernels::gemm_nn(m, n, k, a.value().data() + i * m * k, k, b.value().data() + i * k * n, n,
                     out.data() + i * m * n, n, false);
  return make_result<T>({bs, m, n}, std::move(out), {a, b}, [a, b, bs, m, n, k](Node<T>& self) {
    T* ga = accumulate_target(a);
    T* gb = accumulate_target(b);
    for (std::size_t i = 0; i < bs; ++i) {
      const T* g = self.grad.data() + i * m * n;
      if (ga) kernels::gemm_nt(m, k, n, g, n, b.value().data() + i * k * n, n, ga + i * m * k, k, true);
      if (gb) kernels::gemm_tn(k, n, m, a.value().data() + i * m * k, k, g, n, gb + i * k * n, n, true);
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("add", a, b);
  std::vector<T> out(a.value().begin(), a.value().end());
  kernels::axpy(T(1), b.value().data(), out.data(), out.size());
  return make_result<T>(a.shape(), std::move(out), {a, b}, [a, b](Node<T>& self) {
    const std::size_t n = self.grad.size();
    if (T* ga = accumulate_target(a)) kernels::axpy(T(1), self.grad.data(), ga, n);
    if (T* gb = accumulate_target(b)) kernels::axpy(T(1), self.grad.data(), gb, n);
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("sub", a, b);
  std::vector<T> out(a.value().begin(), a.value().end());
  kernels::axpy(T(-1), b.value().data(), out.data(), out.size());
  return make_result<T>(a.shape(), std::move(out), {a, b}, [a, b](Node<T>& self) {
    const std::size_t n = self.grad.size();
    if (T* ga = accumulate_target(a)) kernels::axpy(T(1), self.grad.data(), ga, n);
    if (T* gb = accumulate_target(b)) kernels::axpy(T(-1), self.grad.data(), gb, n);
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("mul", a, b);
  const auto av = a.value(), bv = b.value();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [a, b](Node<T>& self) {
    const auto av = a.value(), bv = b.value();
    const T* g = self.grad.data();
    if (T* ga = accumulate_target(a))
      for (std::size_t i = 0; i < av.size(); ++i) ga[i] += g[i] * bv[i];
    if (T* gb = accumulate_target(b))
      for (std::size_t i = 0; i < av.size(); ++i) gb[i] += g[i] * av[i];
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.value().begin(), a.value().end());
  for (auto& v : out) v *= s;
  return make_result<T>(a.shape(), std::move(out), {a}, [a, s](Node<T>& self) {
    if (T* ga = accumulate_target(a)) kernels::axpy(s, self.grad.data(), ga, self.grad.size());
  });
}

template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& bias) {
  require_rank("add_rowvec", a, 2);
  if (bias.size() != a.dim(1)) shape_error("add_rowvec", a.shape(), bias.shape());
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(a.value().begin(), a.value().end());
  for (std::size_t i = 0; i < m; ++i) kernels::axpy(T(1), bias.value().data(), out.data() + i * n, n);
  return make_result<T>(a.shape(), std::move(out), {a, bias}, [a, bias, m, n](Node<T>& self) {
    if (T* ga = accumulate_target(a)) kernels::axpy(T(1), self.grad.data(), ga, m * n);
    if (T* gb = accumulate_target(bias))
      for (std::size_t i = 0; i < m; ++i) kernels::axpy(T(1), self.grad.data() + i * n, gb, n);
  });
}

template <typename T>
Tensor<T> mul_rowvec(const Tensor<T>& a, const Tensor<T>& s) {
  require_rank("mul_rowvec", a, 2);
  if (s.size() != a.dim(1)) shape_error("mul_rowvec", a.shape(), s.shape());
  const std::size_t m = a.dim(0), n = a.dim(1);
  const auto av = a.value(), sv = s.value();
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] * sv[j];
  return make_result<T>(a.shape(), std::move(out), {a, s}, [a, s, m, n](Node<T>& self) {
    const auto av = a.value(), sv = s.value();
    const T* g = self.grad.data();
    if (T* ga = accumulate_target(a))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i * n + j] * sv[j];
    if (T* gs = accumulate_target(s))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gs[j] += g[i * n + j] * av[i * n + j];
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
  if (a.rank() == 0) throw Error(Errc::ShapeMismatch, "softmax of a scalar");
  const std::size_t n = a.shape().back(), rows = a.size() / std::max<std::size_t>(n, 1);
  const auto av = a.value();
  std::vector<T> out(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = av.data() + r * n;
    T* y = out.data() + r * n;
    const T mx = *std::max_element(x, x + n);
    T sum = 0;
    for (std::size_t j = 0; j < n; ++j) sum += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[j] /= sum;
  }
  return make_result<T>(a.shape(), std::move(out), {a}, [a, rows, n](Node<T>& self) {
    T* ga = accumulate_target(a);
    if (!ga) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * n;
      const T* g = self.grad.data() + r * n;
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += y[j] * (g[j] - dot);
    }
  });
}

template <typename T>
Tensor<T> segment_softmax(const Tensor<T>& logits, std::span<const std::size_t> segment,
                          std::size_t num_segments) {
  require_rank("segment_softmax", logits, 2);
  const std::size_t e = logits.dim(0), h = logits.dim(1);
  if (segment.size() != e) throw Error(Errc::ShapeMismatch, "segment_softmax: segment ids do not match rows");
  for (auto s : segment)
    if (s >= num_segments) throw Error(Errc::ShapeMismatch, "segment_softmax: segment id out of range");
  const auto lv = logits.value();
  std::vector<T> mx(num_segments * h, -std::numeric_limits<T>::infinity()), sum(num_segments * h, T(0));
  for (std::size_t i = 0; i < e; ++i)
    for (std::size_t j = 0; j < h; ++j) mx[segment[i] * h + j] = std::max(mx[segment[i] * h + j], lv[i * h + j]);
  std::vector<T> out(e * h);
  for (std::size_t i = 0; i < e; ++i)
    for (std::size_t j = 0; j < h; ++j) sum[segment[i] * h + j] += (out[i * h + j] = std::exp(lv[i * h + j] - mx[segment[i] * h + j]));
  for (std::size_t i = 0; i < e; ++i)
    for (std::size_t j = 0; j < h; ++j) out[i * h + j] /= sum[segment[i] * h + j];
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return make_result<T>({e, h}, std::move(out), {logits}, [logits, seg = std::move(seg), num_segments, e, h](Node<T>& self) {
    T* gl = accumulate_target(logits);
    if (!gl) return;
    std::vector<T> dot(num_segments * h, T(0));
    for (std::size_t i = 0; i < e; ++i)
      for (std::size_t j = 0; j < h; ++j) dot[seg[i] * h + j] += self.grad[i * h + j] * self.value[i * h + j];
    for (std::size_t i = 0; i < e; ++i)
      for (std::size_t j = 0; j < h; ++j)
        gl[i * h + j] += self.value[i * h + j] * (self.grad[i * h + j] - dot[seg[i] * h + j]);
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  const auto av = a.value();
  std::vector<T> out(av.size());
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = T(0.5) * av[i] * (T(1) + std::erf(av[i] * inv_sqrt2));
  return make_result<T>(a.shape(), std::move(out), {a}, [a, inv_sqrt2](Node<T>& self) {
    T* ga = accumulate_target(a);
    if (!ga) return;
    const auto av = a.value();
    const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
    for (std::size_t i = 0; i < av.size(); ++i) {
      const T x = av[i];
      const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
      const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x * x);
      ga[i] += self.grad[i] * (cdf + x * pdf);
    }
  });
}

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.value()) s += v;
  return make_result<T>({}, {s}, {a}, [a](Node<T>& self) {
    T* ga = accumulate_target(a);
    if (!ga) return;
    for (std::size_t i = 0; i < a.size(); ++i) ga[i] += self.grad[0];
  });
}

template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& a) {
  if (a.size() == 0) throw Error(Errc::ShapeMismatch, "mean of an empty tensor");
  return scale(reduce_sum(a), T(1) / static_cast<T>(a.size()));
}

template <typename T>
Tensor<T> sum_squares(const Tensor<T>& a) {
  const T s = kernels::dot(a.value().data(), a.value().data(), a.size());
  return make_result<T>({}, {s}, {a}, [a](Node<T>& self) {
    if (T* ga = accumulate_target(a)) kernels::axpy(T(2) * self.grad[0], a.value().data(), ga, a.size());
  });
}

template <typename T>
Tensor<T> gather(const Tensor<T>& a, std::span<const std::size_t> idx) {
  if (a.rank() == 0) throw Error(Errc::ShapeMismatch, "gather from a scalar");
  const std::size_t rows = a.dim(0), d = a.size() / std::max<std::size_t>(rows, 1);
  for (auto i : idx)
    if (i >= rows) throw Error(Errc::ShapeMismatch, "gather index out of range");
  std::vector<T> out(idx.size() * d);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(a.value().data() + idx[i] * d, d, out.data() + i * d);
  Shape shape = a.shape();
  shape[0] = idx.size();
  std::vector<std::size_t> ix(idx.begin(), idx.end());
  return make_result<T>(std::move(shape), std::move(out), {a}, [a, ix = std::move(ix), d](Node<T>& self) {
    T* ga = accumulate_target(a);
    if (!ga) return;
    for (std::size_t i = 0; i < ix.size(); ++i) kernels::axpy(T(1), self.grad.data() + i * d, ga + ix[i] * d, d);
  });
}

template <typename T>
Tensor<T> scatter_add(const Tensor<T>& a, std::span<const std::size_t> idx, std::size_t rows) {
  if (a.rank() == 0 || a.dim(0) != idx.size()) throw Error(Errc::ShapeMismatch, "scatter_add: index count mismatch");
  const std::size_t d = a.size() / std::max<std::size_t>(a.dim(0), 1);
  for (auto i : idx)
    if (i >= rows) throw Error(Errc::ShapeMismatch, "scatter_add index out of range");
  std::vector<T> out(rows * d, T(0));
  for (std::size_t i = 0; i < idx.size(); ++i) kernels::axpy(T(1), a.value().data() + i * d, out.data() + idx[i] * d, d);
  Shape shape = a.shape();
  shape[0] = rows;
  std::vector<std::size_t> ix(idx.begin(), idx.end());
  return make_result<T>(std::move(shape), std::move(out), {a}, [a, ix = std::move(ix), d](Node<T>& self) {
    T* ga = accumulate_target(a);
    if (!ga) return;
    for (std::size_t i = 0; i < ix.size(); ++i) kernels::axpy(T(1), self.grad.data() + ix[i] * d, ga + i * d, d);
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.size()) shape_error("reshape", a.shape(), shape);
  std::vector<T> out(a.value().begin(), a.value().end());
  return make_result<T>(std::move(shape), std::move(out), {a}, [a](Node<T>& self) {
    if (T* ga = accumulate_target(a)) kernels::axpy(T(1), self.grad.data(), ga, self.grad.size());
  });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw Error(Errc::ShapeMismatch, "concat of nothing");
  Shape shape = parts[0].shape();
  if (shape.empty()) throw Error(Errc::ShapeMismatch, "concat of scalars");
  shape[0] = 0;
  std::vector<T> out;
  for (const auto& p : parts) {
    Shape tail(p.shape().begin() + 1, p.shape().end());
    Shape want(parts[0].shape().begin() + 1, parts[0].shape().end());
    if (p.rank() != parts[0].rank() || tail != want) shape_error("concat_rows", parts[0].shape(), p.shape());
    shape[0] += p.dim(0);
    out.insert(out.end(), p.value().begin(), p.value().end());
  }
  return make_result<T>(std::move(shape), std::move(out), parts, [parts](Node<T>& self) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      if (T* gp = accumulate_target(p)) kernels::axpy(T(1), self.grad.data() + off, gp, p.size());
      off += p.size();
    }
  });
}

#define ASMFLOW_TENSOR_INSTANTIATE(T)                                                            \
  template class Tensor<T>;                                                                      \
  template class Tape<T>;                                                                        \
  template class TapeScope<T>;                                                                   \
  template Tape<T>* active_tape<T>() noexcept;                                                   \
  template Tensor<T> make_result<T>(Shape, std::vector<T>, const std::vector<Tensor<T>>&,        \
                                    std::function<void(Node<T>&)>);                              \
  template T* accumulate_target<T>(const Tensor<T>&);                                            \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> matmul_nt<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> batch_contract<T>(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                              \
  template Tensor<T> add_rowvec<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> mul_rowvec<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> softmax<T>(const Tensor<T>&);                                               \
  template Tensor<T> segment_softmax<T>(const Tensor<T>&, std::span<const std::size_t>, std::size_t); \
  template Tensor<T> gelu<T>(const Tensor<T>&);                                                  \
  template Tensor<T> reduce_mean<T>(const Tensor<T>&);                                           \
  template Tensor<T> reduce_sum<T>(const Tensor<T>&);                                            \
  template Tensor<T> sum_squares<T>(const Tensor<T>&);                                           \
  template Tensor<T> gather<T>(const Tensor<T>&, std::span<const std::size_t>);                  \
  template Tensor<T> scatter_add<T>(const Tensor<T>&, std::span<const std::size_t>, std::size_t); \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                        \
  template Tensor<T> concat_rows<T>(const std::vector<Tensor<T>>&);

ASMFLOW_TENSOR_INSTANTIATE(float)
ASMFLOW_TENSOR_INSTANTIATE(double)

}  // namespace asmflow::tensor
