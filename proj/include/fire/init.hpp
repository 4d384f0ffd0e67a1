#pragma once

#include <cstddef>

#include "fire/rng.hpp"
#include "fire/tensor.hpp"

namespace fire::init {

Tensor uniform(Shape shape, real lo, real hi, Rng& rng, bool requires_grad = true);
/// Glorot/Xavier uniform for a [fan_in, fan_out] matrix.
Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng);
/// Square orthogonal matrix (Gram-Schmidt on a Gaussian draw).
std::vector<real> orthogonal(std::size_t n, Rng& rng);

}  // namespace fire::init
