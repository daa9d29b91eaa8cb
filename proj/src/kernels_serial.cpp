#include "axir/kernels_serial.hpp"

#include <algorithm>
#include <cmath>

#include "axir/error.hpp"

namespace axir::serial {

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (a.rank() != 2 || b.rank() != 2 || b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree: " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    auto crow = c.row(i);
    auto arow = a.row(i);
    for (std::size_t t = 0; t < k; ++t) {
      auto brow = b.row(t);
      for (std::size_t j = 0; j < n; ++j) crow[j] += arow[t] * brow[j];
    }
  }
  return c;
}

Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> mask) {
  const std::size_t m = x.rows(), n = x.cols();
  if (!mask.empty() && mask.size() != x.size()) {
    throw DimensionError("softmax_rows: mask size mismatch");
  }
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    auto xr = x.row(i);
    auto yr = y.row(i);
    auto live = [&](std::size_t j) { return mask.empty() || mask[i * n + j]; };
    float row_max = -INFINITY;
    for (std::size_t j = 0; j < n; ++j)
      if (live(j)) row_max = std::max(row_max, xr[j]);
    if (row_max == -INFINITY) throw DegenerateRowError("softmax_rows: fully masked row");
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!live(j)) continue;
      const double e = std::exp(static_cast<double>(xr[j]) - row_max);
      yr[j] = static_cast<float>(e);
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < n; ++j)
      if (live(j)) yr[j] = static_cast<float>(static_cast<double>(yr[j]) * inv);
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps) {
  const std::size_t d = x.shape().back();
  if (gamma.size() != d || beta.size() != d) {
    throw DimensionError("layer_norm: parameter width mismatch");
  }
  Tensor y(x.shape());
  const std::size_t m = x.size() / std::max<std::size_t>(d, 1);
  for (std::size_t i = 0; i < m; ++i) {
    auto xr = x.data().subspan(i * d, d);
    auto yr = y.data().subspan(i * d, d);
    double mean = 0.0;
    for (float v : xr) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (float v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    for (std::size_t j = 0; j < d; ++j)
      yr[j] = static_cast<float>((xr[j] - mean) * inv * gamma.data()[j] + beta.data()[j]);
  }
  return y;
}

Tensor gelu(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    y.data()[i] = static_cast<float>(0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)));
  }
  return y;
}

}  // namespace axir::serial
