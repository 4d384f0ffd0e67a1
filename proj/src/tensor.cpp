#include "fire/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "fire/error.hpp"

namespace fire {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

// --- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, real value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return from(std::move(shape), std::vector<real>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<real> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(real value, bool requires_grad) { return from({}, {value}, requires_grad); }

std::size_t Tensor::last_dim() const {
  const auto& s = node_->shape;
  return s.empty() ? 1 : s.back();
}

real Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

std::vector<real> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<real>(size(), 0.0);
  return node_->grad;
}

std::span<real> Tensor::mutable_grad() {
  if (node_->grad.empty()) node_->grad.assign(size(), 0.0);
  return node_->grad;
}

Tensor Tensor::clone() const { return from(shape(), node_->value, requires_grad()); }

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

real* grad_buffer(const Tensor& t) {
  if (!t.defined() || !t.requires_grad()) return nullptr;
  auto* node = t.node();
  if (node->grad.empty()) node->grad.assign(node->value.size(), 0.0);
  return node->grad.data();
}

// --- Tape ------------------------------------------------------------------

namespace {
thread_local Tape* g_current_tape = nullptr;
}

Tape* Tape::current() { return g_current_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_current_tape) { g_current_tape = &tape; }
TapeScope::~TapeScope() { g_current_tape = previous_; }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;
  auto* root = loss.node();
  if (root->grad.empty()) root->grad.assign(1, 0.0);
  root->grad[0] += 1.0;

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    auto& out = *it->output;
    if (out.grad.empty()) continue;
    it->backward(out.grad, out.value);
    // op outputs are interior nodes; their gradients are not needed afterwards
    out.grad.clear();
    out.grad.shrink_to_fit();
  }
}

Tensor make_op_result(Shape shape, std::vector<real> value, const std::vector<Tensor>& inputs,
                      BackwardFn backward) {
  Tensor out = Tensor::from(std::move(shape), std::move(value));
  Tape* tape = Tape::current();
  if (tape == nullptr) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (!needs) return out;
  out.set_requires_grad(true);
  Tape::Entry entry;
  entry.output = out.shared_node();
  entry.inputs.reserve(inputs.size());
  for (const auto& t : inputs) entry.inputs.push_back(t.shared_node());
  entry.backward = std::move(backward);
  tape->record(std::move(entry));
  return out;
}

// --- helpers ---------------------------------------------------------------

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

// C[m x n] (+)= op(A) * op(B), row-major. Every output element accumulates
// over k in ascending order, so a row's result never depends on which other
// rows share the call.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const real* a,
          const real* b, real* c, real beta) {
  if (beta == 0.0) std::fill(c, c + m * n, 0.0);
  auto a_at = [&](std::size_t i, std::size_t kk) { return trans_a ? a[kk * m + i] : a[i * k + kk]; };
  if (!trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      real* row = c + i * n;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const real aik = a_at(i, kk);
        const real* brow = b + kk * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += aik * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const real* brow = b + j * k;
        real total = 0.0;
        for (std::size_t kk = 0; kk < k; ++kk) total += a_at(i, kk) * brow[kk];
        c[i * n + j] += total;
      }
    }
  }
}

template <typename Fn, typename Deriv>
Tensor unary(const Tensor& x, Fn fn, Deriv deriv) {
  std::vector<real> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(in[i]);
  return make_op_result(x.shape(), std::move(out), {x},
                        [x, deriv](std::span<const real> g, std::span<const real> y) {
                          real* gx = grad_buffer(x);
                          if (!gx) return;
                          const auto xv = x.data();
                          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xv[i], y[i]);
                        });
}

}  // namespace

// --- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() != 2 || a.last_dim() != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.last_dim(), n = b.dim(1);
  Shape shape = a.shape();
  shape.back() = n;
  std::vector<real> out(m * n);
  gemm(false, false, m, n, k, a.data().data(), b.data().data(), out.data(), 0.0);
  return make_op_result(std::move(shape), std::move(out), {a, b},
                        [a, b, m, n, k](std::span<const real> g, std::span<const real>) {
                          if (real* ga = grad_buffer(a)) gemm(false, true, m, k, n, g.data(), b.data().data(), ga, 1.0);
                          if (real* gb = grad_buffer(b)) gemm(true, false, k, n, m, a.data().data(), g.data(), gb, 1.0);
                        });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_string(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<real> out(r * c);
  const auto in = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  return make_op_result({c, r}, std::move(out), {a}, [a, r, c](std::span<const real> g, std::span<const real>) {
    real* ga = grad_buffer(a);
    if (!ga) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

namespace {

Tensor batched(const Tensor& a, const Tensor& b, bool trans_b, const char* name) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != (trans_b ? b.dim(2) : b.dim(1))) {
    throw ShapeError(std::string(name) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = trans_b ? b.dim(1) : b.dim(2);
  std::vector<real> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    gemm(false, trans_b, m, n, k, a.data().data() + i * m * k, b.data().data() + i * k * n,
         out.data() + i * m * n, 0.0);
  }
  return make_op_result(
      {batch, m, n}, std::move(out), {a, b},
      [a, b, batch, m, n, k, trans_b](std::span<const real> g, std::span<const real>) {
        real* ga = grad_buffer(a);
        real* gb = grad_buffer(b);
        for (std::size_t i = 0; i < batch; ++i) {
          const real* gi = g.data() + i * m * n;
          const real* ai = a.data().data() + i * m * k;
          const real* bi = b.data().data() + i * k * n;
          // dA = G * op(B)^T
          if (ga) gemm(false, !trans_b, m, k, n, gi, bi, ga + i * m * k, 1.0);
          if (gb) {
            if (trans_b) {
              gemm(true, false, n, k, m, gi, ai, gb + i * k * n, 1.0);  // dB[n,k] = G^T A
            } else {
              gemm(true, false, k, n, m, ai, gi, gb + i * k * n, 1.0);  // dB[k,n] = A^T G
            }
          }
        }
      });
}

}  // namespace

Tensor bmm(const Tensor& a, const Tensor& b) { return batched(a, b, false, "bmm"); }
Tensor bmm_nt(const Tensor& a, const Tensor& b) { return batched(a, b, true, "bmm_nt"); }

// --- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [a, b](std::span<const real> g, std::span<const real>) {
    if (real* ga = grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (real* gb = grad_buffer(b))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [a, b](std::span<const real> g, std::span<const real>) {
    if (real* ga = grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (real* gb = grad_buffer(b))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [a, b](std::span<const real> g, std::span<const real>) {
    if (real* ga = grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
    if (real* gb = grad_buffer(b))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
  });
}

Tensor scale(const Tensor& a, real factor) {
  std::vector<real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return make_op_result(a.shape(), std::move(out), {a}, [a, factor](std::span<const real> g, std::span<const real>) {
    if (real* ga = grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t n = x.last_dim();
  if (bias.size() != n) {
    throw ShapeError("add_bias: bias " + shape_string(bias.shape()) + " does not match " + shape_string(x.shape()));
  }
  std::vector<real> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i % n];
  return make_op_result(x.shape(), std::move(out), {x, bias},
                        [x, bias, n](std::span<const real> g, std::span<const real>) {
                          if (real* gx = grad_buffer(x))
                            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                          if (real* gb = grad_buffer(bias))
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
                        });
}

Tensor mul_rows(const Tensor& x, const Tensor& factors) {
  const std::size_t n = x.last_dim(), rows = x.rows();
  if (factors.size() != rows) {
    throw ShapeError("mul_rows: factors " + shape_string(factors.shape()) + " do not match rows of " +
                     shape_string(x.shape()));
  }
  std::vector<real> out(x.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = x[r * n + j] * factors[r];
  return make_op_result(x.shape(), std::move(out), {x, factors},
                        [x, factors, n, rows](std::span<const real> g, std::span<const real>) {
                          real* gx = grad_buffer(x);
                          real* gf = grad_buffer(factors);
                          for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t j = 0; j < n; ++j) {
                              if (gx) gx[r * n + j] += g[r * n + j] * factors[r];
                              if (gf) gf[r] += g[r * n + j] * x[r * n + j];
                            }
                          }
                        });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](real v) { return v > 0.0 ? v : 0.0; }, [](real v, real) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](real v) { return std::tanh(v); }, [](real, real y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, [](real v) { return 1.0 / (1.0 + std::exp(-v)); }, [](real, real y) { return y * (1.0 - y); });
}

Tensor log_clamped(const Tensor& x, real floor) {
  return unary(
      x, [floor](real v) { return std::log(std::max(v, floor)); },
      [floor](real v, real) { return v > floor ? 1.0 / v : 0.0; });
}

// --- softmax ---------------------------------------------------------------

Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> mask) {
  if (!mask.empty() && mask.size() != x.size()) {
    throw ShapeError("softmax_rows: mask of " + std::to_string(mask.size()) + " cells for shape " +
                     shape_string(x.shape()));
  }
  const std::size_t n = x.last_dim(), rows = x.rows();
  std::vector<real> out(x.size(), 0.0);
  const auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * n;
    real peak = -std::numeric_limits<real>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (mask.empty() || mask[base + j]) peak = std::max(peak, in[base + j]);
    if (peak == -std::numeric_limits<real>::infinity()) continue;  // all-invalid row
    real total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask.empty() || mask[base + j]) {
        out[base + j] = std::exp(in[base + j] - peak);
        total += out[base + j];
      }
    }
    for (std::size_t j = 0; j < n; ++j) out[base + j] /= total;
  }
  return make_op_result(x.shape(), std::move(out), {x}, [x, n, rows](std::span<const real> g, std::span<const real> y) {
    real* gx = grad_buffer(x);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * n;
      real dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[base + j] * y[base + j];
      for (std::size_t j = 0; j < n; ++j) gx[base + j] += y[base + j] * (g[base + j] - dot);
    }
  });
}

// --- structural ------------------------------------------------------------

Tensor concat_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_last: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t width = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows || p.rank() != parts.front().rank()) {
      throw ShapeError("concat_last: shape mismatch " + shape_string(parts.front().shape()) + " vs " +
                       shape_string(p.shape()));
    }
    width += p.last_dim();
  }
  Shape shape = parts.front().shape();
  if (shape.empty()) shape.push_back(1);
  shape.back() = width;
  std::vector<real> out(rows * width);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.last_dim();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(p.data().begin() + r * w, w, out.begin() + r * width + offset);
    offsets.push_back(offset);
    offset += w;
  }
  return make_op_result(std::move(shape), std::move(out), parts,
                        [parts, offsets, rows, width](std::span<const real> g, std::span<const real>) {
                          for (std::size_t i = 0; i < parts.size(); ++i) {
                            real* gp = grad_buffer(parts[i]);
                            if (!gp) continue;
                            const std::size_t w = parts[i].last_dim();
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t j = 0; j < w; ++j) gp[r * w + j] += g[r * width + offsets[i] + j];
                          }
                        });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Shape shape = parts.front().shape();
  if (shape.empty()) throw ShapeError("concat_rows: scalar input");
  std::size_t leading = 0;
  std::vector<real> out;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1)) {
      throw ShapeError("concat_rows: shape mismatch " + shape_string(shape) + " vs " + shape_string(p.shape()));
    }
    leading += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  shape[0] = leading;
  return make_op_result(std::move(shape), std::move(out), parts, [parts](std::span<const real> g, std::span<const real>) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      if (real* gp = grad_buffer(p))
        for (std::size_t i = 0; i < p.size(); ++i) gp[i] += g[offset + i];
      offset += p.size();
    }
  });
}

Tensor slice_last(const Tensor& x, std::size_t start, std::size_t length) {
  const std::size_t n = x.last_dim(), rows = x.rows();
  if (start + length > n) {
    throw ShapeError("slice_last: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") outside " + shape_string(x.shape()));
  }
  Shape shape = x.shape();
  shape.back() = length;
  std::vector<real> out(rows * length);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.data().begin() + r * n + start, length, out.begin() + r * length);
  return make_op_result(std::move(shape), std::move(out), {x},
                        [x, start, length, n, rows](std::span<const real> g, std::span<const real>) {
                          real* gx = grad_buffer(x);
                          if (!gx) return;
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t j = 0; j < length; ++j) gx[r * n + start + j] += g[r * length + j];
                        });
}

Tensor gather_rows(const Tensor& x, std::span<const std::int64_t> indices) {
  const std::size_t n = x.last_dim(), rows = x.rows();
  std::vector<real> out(indices.size() * n, 0.0);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::int64_t idx = indices[i];
    if (idx < 0) continue;
    if (static_cast<std::size_t>(idx) >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(idx) + " out of bounds for " +
                       shape_string(x.shape()));
    }
    std::copy_n(x.data().begin() + idx * n, n, out.begin() + i * n);
  }
  std::vector<std::int64_t> idx(indices.begin(), indices.end());
  return make_op_result({indices.size(), n}, std::move(out), {x},
                        [x, idx = std::move(idx), n](std::span<const real> g, std::span<const real>) {
                          real* gx = grad_buffer(x);
                          if (!gx) return;
                          for (std::size_t i = 0; i < idx.size(); ++i) {
                            if (idx[i] < 0) continue;
                            real* dst = gx + idx[i] * n;
                            for (std::size_t j = 0; j < n; ++j) dst[j] += g[i * n + j];
                          }
                        });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  std::vector<real> out(x.data().begin(), x.data().end());
  return make_op_result(std::move(shape), std::move(out), {x}, [x](std::span<const real> g, std::span<const real>) {
    if (real* gx = grad_buffer(x))
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

// --- reductions ------------------------------------------------------------

Tensor segment_pool(const Tensor& x, std::size_t segment_length, std::span<const std::size_t> lengths,
                    PoolMode mode) {
  const std::size_t d = x.last_dim(), segments = lengths.size();
  if (x.rows() != segments * segment_length) {
    throw ShapeError("segment_pool: " + shape_string(x.shape()) + " is not " + std::to_string(segments) +
                     " segments of " + std::to_string(segment_length) + " rows");
  }
  std::vector<real> out(segments * d, 0.0);
  std::vector<std::size_t> argmax(mode == PoolMode::kMax ? segments * d : 0);
  const auto in = x.data();
  for (std::size_t s = 0; s < segments; ++s) {
    const std::size_t len = lengths[s];
    if (len > segment_length) {
      throw ShapeError("segment_pool: length " + std::to_string(len) + " exceeds segment of " +
                       std::to_string(segment_length) + " steps");
    }
    if (len == 0) continue;
    const std::size_t base = s * segment_length;
    for (std::size_t j = 0; j < d; ++j) {
      switch (mode) {
        case PoolMode::kMax: {
          std::size_t best = base;
          for (std::size_t t = 1; t < len; ++t)
            if (in[(base + t) * d + j] > in[best * d + j]) best = base + t;
          out[s * d + j] = in[best * d + j];
          argmax[s * d + j] = best;
          break;
        }
        case PoolMode::kMean: {
          real total = 0.0;
          for (std::size_t t = 0; t < len; ++t) total += in[(base + t) * d + j];
          out[s * d + j] = total / static_cast<real>(len);
          break;
        }
        case PoolMode::kLast:
          out[s * d + j] = in[(base + len - 1) * d + j];
          break;
      }
    }
  }
  std::vector<std::size_t> lens(lengths.begin(), lengths.end());
  return make_op_result(
      {segments, d}, std::move(out), {x},
      [x, lens = std::move(lens), argmax = std::move(argmax), segment_length, d, mode](std::span<const real> g,
                                                                                       std::span<const real>) {
        real* gx = grad_buffer(x);
        if (!gx) return;
        for (std::size_t s = 0; s < lens.size(); ++s) {
          const std::size_t len = lens[s];
          if (len == 0) continue;
          const std::size_t base = s * segment_length;
          for (std::size_t j = 0; j < d; ++j) {
            const real gj = g[s * d + j];
            switch (mode) {
              case PoolMode::kMax:
                gx[argmax[s * d + j] * d + j] += gj;
                break;
              case PoolMode::kMean:
                for (std::size_t t = 0; t < len; ++t) gx[(base + t) * d + j] += gj / static_cast<real>(len);
                break;
              case PoolMode::kLast:
                gx[(base + len - 1) * d + j] += gj;
                break;
            }
          }
        }
      });
}

Tensor pool(const Tensor& seq, PoolMode mode, std::size_t length) {
  if (seq.rank() != 2) throw ShapeError("pool: expected [t, d], got " + shape_string(seq.shape()));
  if (length > seq.dim(0)) {
    throw ShapeError("pool: length " + std::to_string(length) + " exceeds " + std::to_string(seq.dim(0)) + " steps");
  }
  const std::size_t lengths[] = {length};
  return reshape(segment_pool(seq, seq.dim(0), lengths, mode), {seq.dim(1)});
}

Tensor sum(const Tensor& x) {
  const real total = std::accumulate(x.data().begin(), x.data().end(), 0.0);
  return make_op_result({}, {total}, {x}, [x](std::span<const real> g, std::span<const real>) {
    if (real* gx = grad_buffer(x))
      for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[0];
  });
}

Tensor dropout(const Tensor& x, real rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ShapeError("dropout: rate must be below 1");
  const real keep = 1.0 - rate;
  std::vector<real> mask(x.size());
  for (auto& m : mask) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mul(x, Tensor::from(x.shape(), std::move(mask)));
}

}  // namespace fire
