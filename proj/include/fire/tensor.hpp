#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fire/rng.hpp"

namespace fire {

// All arithmetic runs in double precision; see README "Precision".
using real = double;
using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Receives the output gradient and the output value of the recorded op.
using BackwardFn = std::function<void(std::span<const real> out_grad, std::span<const real> out_value)>;

namespace detail {
struct Node {
  Shape shape;
  std::vector<real> value;
  std::vector<real> grad;  // empty until something accumulates into it
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major array with shared identity. Copies of a Tensor alias the
/// same storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<real> values, bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t last_dim() const;
  std::size_t rows() const { return size() / last_dim(); }

  std::span<const real> data() const { return node_->value; }
  /// In-place access. Never mutate a tensor that is referenced by a live tape.
  std::span<real> mutable_data() { return node_->value; }
  real item() const;
  real operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Accumulated gradient, or all zeros if nothing reached this tensor.
  std::vector<real> grad() const;
  std::span<real> mutable_grad();
  void zero_grad() { node_->grad.clear(); }

  Tensor clone() const;
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& shared_node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend class Tape;
  friend Tensor make_op_result(Shape, std::vector<real>, const std::vector<Tensor>&,
                               BackwardFn);
};

/// Define-by-run operation record. Operations executed while a Tape is active
/// on the current thread (see TapeScope) append their backward rules here.
class Tape {
 public:
  struct Entry {
    std::shared_ptr<detail::Node> output;
    std::vector<std::shared_ptr<detail::Node>> inputs;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(Entry entry) { entries_.push_back(std::move(entry)); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

  /// Reverse sweep from a scalar loss. Gradients accumulate into every
  /// requires_grad leaf on the ancestry path; other tensors are untouched.
  void backward(const Tensor& loss);

  static Tape* current();

 private:
  std::vector<Entry> entries_;
};

/// Makes `tape` the current thread's recording target for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Builds an op output; records `backward` on the active tape when any input
/// requires a gradient.
Tensor make_op_result(Shape shape, std::vector<real> value, const std::vector<Tensor>& inputs,
                      BackwardFn backward);

/// Gradient buffer of `t` when it participates in differentiation, else null.
real* grad_buffer(const Tensor& t);

// ---------------------------------------------------------------------------
// Operations. Every op checks shapes and throws ShapeError naming the shapes.

/// a [..., k] times b [k, n] -> [..., n]; leading dims of `a` are flattened.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// Batched product: a [B, m, k], b [B, k, n] -> [B, m, n].
Tensor bmm(const Tensor& a, const Tensor& b);
/// Batched product with b transposed: a [B, m, k], b [B, n, k] -> [B, m, n].
Tensor bmm_nt(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real factor);
/// x [..., n] + bias [n]
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// Multiplies each last-axis row of x by the matching entry of `factors`
/// (factors.size() == x.rows()).
Tensor mul_rows(const Tensor& x, const Tensor& factors);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// log(max(x, floor)); no gradient flows where the clamp is active.
Tensor log_clamped(const Tensor& x, real floor);

/// Softmax over the last axis. `mask` (same size as x) marks valid cells;
/// invalid cells get exactly 0 and a row with no valid cell is all zeros.
Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> mask = {});

Tensor concat_last(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_last(const Tensor& x, std::size_t start, std::size_t length);
/// Picks last-axis rows of x. Index -1 yields a zero row.
Tensor gather_rows(const Tensor& x, std::span<const std::int64_t> indices);
Tensor reshape(const Tensor& x, Shape shape);

enum class PoolMode { kMax, kMean, kLast };

/// x holds segments of `segment_length` consecutive rows; reduces the first
/// lengths[s] rows of segment s. Length 0 gives a zero row. Output [S, d].
Tensor segment_pool(const Tensor& x, std::size_t segment_length,
                    std::span<const std::size_t> lengths, PoolMode mode);
/// Single-sequence pooling: seq [t, d] -> [d].
Tensor pool(const Tensor& seq, PoolMode mode, std::size_t length);

Tensor sum(const Tensor& x);
/// Inverted dropout; identity when rate == 0.
Tensor dropout(const Tensor& x, real rate, Rng& rng);

}  // namespace fire
