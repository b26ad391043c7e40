#pragma once

// Minimal reverse-mode tensor engine.
//
// Tensors are dense row-major buffers behind shared nodes. Operations run
// eagerly; when a Tape is active on the calling thread (see TapeScope) and
// any input requires gradients, the result node is appended to the tape
// together with its backward rule. Without an active tape every result is a
// constant, which is how inference runs.
//
// Gradients of leaves accumulate across backward calls until zero_grad();
// gradients of intermediate nodes are reset at the start of each backward.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace asmflow::tensor {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s) noexcept;

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first touched
  bool requires_grad = false;
  bool leaf = true;
  std::function<void(Node&)> backward;

  /// Gradient buffer, allocated (zero) on first use.
  std::vector<T>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T v, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(n_); }
  const Shape& shape() const noexcept { return n_->shape; }
  std::size_t dim(std::size_t i) const { return n_->shape.at(i); }
  std::size_t rank() const noexcept { return n_->shape.size(); }
  std::size_t size() const noexcept { return n_->value.size(); }
  bool requires_grad() const noexcept { return n_->requires_grad; }

  std::span<const T> value() const noexcept { return n_->value; }
  /// Writable values; intended for leaves (parameters, inputs).
  std::span<T> mutable_value() noexcept { return n_->value; }
  /// Empty span when no gradient has reached this tensor.
  std::span<const T> grad() const noexcept { return n_->grad; }
  void zero_grad();
  T item() const;

  Node<T>* node() const noexcept { return n_.get(); }
  const std::shared_ptr<Node<T>>& shared() const noexcept { return n_; }

 private:
  std::shared_ptr<Node<T>> n_;
};

/// Nodes recorded in creation order, which is a topological order.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::shared_ptr<Node<T>> n) { nodes_.push_back(std::move(n)); }
  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() noexcept { nodes_.clear(); }

  /// Populates gradients of every leaf that `loss` depends on. Throws
  /// ShapeMismatch for a non-scalar loss and DisconnectedGraph when no
  /// gradient-requiring input reaches it.
  void backward(const Tensor<T>& loss);

 private:
  std::vector<std::shared_ptr<Node<T>>> nodes_;
};

/// Makes `tape` the active tape of the calling thread for its lifetime.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

template <typename T>
Tape<T>* active_tape() noexcept;

/// Builds a result node. When recording is active and some parent requires
/// gradients, `backward` is stored and will be called with the result node
/// once its gradient is complete; it must add into the parents' gradients
/// via accumulate_target().
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const std::vector<Tensor<T>>& parents,
                      std::function<void(Node<T>&)> backward);

/// Gradient buffer of `t` if it participates in differentiation, else null.
template <typename T>
T* accumulate_target(const Tensor<T>& t);

// ---- Generic operations --------------------------------------------------

/// [m,k] x [k,n] -> [m,n]
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// [m,k] x [n,k]^T -> [m,n]; the usual dense layer with weights stored out x in.
template <typename T> Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);
/// [b,m,k] x [b,k,n] -> [b,m,n]
template <typename T> Tensor<T> batch_contract(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);
/// a [m,n] + bias [n] broadcast over rows.
template <typename T> Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& bias);
/// a [m,n] * s [n] broadcast over rows.
template <typename T> Tensor<T> mul_rowvec(const Tensor<T>& a, const Tensor<T>& s);

/// Softmax over the last dimension.
template <typename T> Tensor<T> softmax(const Tensor<T>& a);
/// Softmax of logits [E, h] over the rows sharing a segment id, per column.
template <typename T>
Tensor<T> segment_softmax(const Tensor<T>& logits, std::span<const std::size_t> segment,
                          std::size_t num_segments);
/// Exact (erf) GELU.
template <typename T> Tensor<T> gelu(const Tensor<T>& a);

template <typename T> Tensor<T> reduce_mean(const Tensor<T>& a);
template <typename T> Tensor<T> reduce_sum(const Tensor<T>& a);
/// Sum of squares of all entries.
template <typename T> Tensor<T> sum_squares(const Tensor<T>& a);

/// Rows idx of a [n, d] -> [m, d]; the shape tail after dim 0 is kept.
template <typename T> Tensor<T> gather(const Tensor<T>& a, std::span<const std::size_t> idx);
/// out[idx[i]] += a[i]; out has `rows` rows.
template <typename T>
Tensor<T> scatter_add(const Tensor<T>& a, std::span<const std::size_t> idx, std::size_t rows);

/// Same buffer, new shape of equal element count.
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
/// Concatenation along dimension 0.
template <typename T> Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);

}  // namespace asmflow::tensor
