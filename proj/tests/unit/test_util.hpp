#pragma once

#include <cmath>
#include <cstdint>

#include "wngan/rng.hpp"
#include "wngan/tensor.hpp"

namespace wngan::test {

inline Tensor randn(const Shape& s, std::uint64_t seed, std::uint64_t stream = 0) {
  CounterRng rng(seed, stream);
  return rng.normal_tensor(s);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), 1e-300); }

}  // namespace wngan::test
