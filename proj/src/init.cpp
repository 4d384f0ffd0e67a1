#include "fire/init.hpp"

#include <cmath>

namespace fire::init {

Tensor uniform(Shape shape, real lo, real hi, Rng& rng, bool requires_grad) {
  std::vector<real> values(shape_size(shape));
  for (auto& v : values) v = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const real limit = std::sqrt(6.0 / static_cast<real>(fan_in + fan_out));
  return uniform({fan_in, fan_out}, -limit, limit, rng);
}

std::vector<real> orthogonal(std::size_t n, Rng& rng) {
  std::vector<real> q(n * n);
  for (auto& v : q) v = rng.normal();
  // rows of q, orthonormalised in place (modified Gram-Schmidt)
  for (std::size_t i = 0; i < n; ++i) {
    real* row = q.data() + i * n;
    for (std::size_t k = 0; k < i; ++k) {
      const real* prev = q.data() + k * n;
      real dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += row[j] * prev[j];
      for (std::size_t j = 0; j < n; ++j) row[j] -= dot * prev[j];
    }
    real norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) norm += row[j] * row[j];
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < n; ++j) row[j] /= norm;
  }
  return q;
}

}  // namespace fire::init
