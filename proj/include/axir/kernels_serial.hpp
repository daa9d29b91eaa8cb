#pragma once

// Single-threaded reference versions of the parallel kernels in tensor.hpp.
// Kept for the equivalence tests and the benchmark; the engine itself calls
// the parallel versions.

#include <cstdint>
#include <span>

#include "axir/tensor.hpp"

namespace axir::serial {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> mask = {});
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps);
Tensor gelu(const Tensor& x);

}  // namespace axir::serial
