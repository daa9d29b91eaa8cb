#include "axir/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "axir/error.hpp"

namespace axir {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void require_rank2(const Tensor& x, const char* op) {
  if (x.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a 2-D tensor, got " +
                         shape_str(x.shape()));
  }
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(product(shape_), 0.0f) {}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (product(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_str(shape_) + " needs " +
                         std::to_string(product(shape_)) + " values, got " +
                         std::to_string(data_.size()));
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<float> values) {
  return Tensor({rows, cols}, std::vector<float>(values));
}

std::size_t Tensor::rows() const {
  if (shape_.size() == 1) return 1;
  if (shape_.size() == 2) return shape_[0];
  throw DimensionError("rows() on tensor of shape " + shape_str(shape_));
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 1) return shape_[0];
  if (shape_.size() == 2) return shape_[1];
  throw DimensionError("cols() on tensor of shape " + shape_str(shape_));
}

std::span<float> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<float>(data_).subspan(r * c, c);
}

std::span<const float> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const float>(data_).subspan(r * c, c);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree: " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor c({m, n});
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  float* pc = c.data().data();
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
  for (long i = 0; i < rows; ++i) {
    float* crow = pc + i * n;
    const float* arow = pa + i * k;
    for (std::size_t t = 0; t < k; ++t) {
      const float av = arow[t];
      const float* brow = pb + t * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> mask) {
  require_rank2(x, "softmax_rows");
  if (!mask.empty() && mask.size() != x.size()) {
    throw DimensionError("softmax_rows: mask has " + std::to_string(mask.size()) +
                         " entries for tensor " + shape_str(x.shape()));
  }
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor y({m, n});
  const float* px = x.data().data();
  float* py = y.data().data();
  const bool masked = !mask.empty();
  bool degenerate = false;
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * n >= kParallelWork) reduction(|| : degenerate)
  for (long i = 0; i < rows; ++i) {
    const float* xr = px + i * n;
    float* yr = py + i * n;
    const std::uint8_t* mr = masked ? mask.data() + i * n : nullptr;
    float row_max = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      if (!mr || mr[j]) row_max = std::max(row_max, xr[j]);
    }
    if (row_max == -INFINITY) {
      degenerate = true;
      continue;
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mr && !mr[j]) continue;
      const double e = std::exp(static_cast<double>(xr[j]) - row_max);
      yr[j] = static_cast<float>(e);
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < n; ++j) {
      if (mr && !mr[j]) continue;
      yr[j] = static_cast<float>(static_cast<double>(yr[j]) * inv);
    }
  }
  if (degenerate) throw DegenerateRowError("softmax_rows: fully masked row");
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps) {
  const std::size_t d = x.cols();
  if (gamma.size() != d || beta.size() != d) {
    throw DimensionError("layer_norm: width " + std::to_string(d) +
                         " vs gamma " + shape_str(gamma.shape()) + ", beta " +
                         shape_str(beta.shape()));
  }
  const std::size_t m = x.size() / std::max<std::size_t>(d, 1);
  Tensor y(x.shape());
  const float* px = x.data().data();
  const float* pg = gamma.data().data();
  const float* pb = beta.data().data();
  float* py = y.data().data();
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * d >= kParallelWork)
  for (long i = 0; i < rows; ++i) {
    const float* xr = px + i * d;
    float* yr = py + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xr[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    for (std::size_t j = 0; j < d; ++j) {
      yr[j] = static_cast<float>((xr[j] - mean) * inv * pg[j] + pb[j]);
    }
  }
  return y;
}

Tensor gelu(const Tensor& x) {
  Tensor y(x.shape());
  const float* px = x.data().data();
  float* py = y.data().data();
  const long n = static_cast<long>(x.size());
#pragma omp parallel for schedule(static) if (x.size() >= kParallelWork)
  for (long i = 0; i < n; ++i) {
    const double v = px[i];
    py[i] = static_cast<float>(0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)));
  }
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor c = a;
  add_inplace(c, b);
  return c;
}

void add_inplace(Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  auto pa = a.data();
  auto pb = b.data();
  for (std::size_t i = 0; i < pa.size(); ++i) pa[i] += pb[i];
}

Tensor add_bias_rows(const Tensor& x, const Tensor& bias) {
  require_rank2(x, "add_bias_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.size() != n) {
    throw DimensionError("add_bias_rows: bias " + shape_str(bias.shape()) +
                         " for tensor " + shape_str(x.shape()));
  }
  Tensor y = x;
  auto pb = bias.data();
  for (std::size_t i = 0; i < m; ++i) {
    auto r = y.row(i);
    for (std::size_t j = 0; j < n; ++j) r[j] += pb[j];
  }
  return y;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_cols");
  if (begin > end || end > x.dim(1)) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") outside " + shape_str(x.shape()));
  }
  const std::size_t m = x.dim(0), w = end - begin;
  Tensor y({m, w});
  for (std::size_t i = 0; i < m; ++i) {
    auto src = x.row(i).subspan(begin, w);
    std::copy(src.begin(), src.end(), y.row(i).begin());
  }
  return y;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_rows");
  if (begin > end || end > x.dim(0)) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") outside " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(1);
  auto src = x.data().subspan(begin * n, (end - begin) * n);
  return Tensor({end - begin, n}, std::vector<float>(src.begin(), src.end()));
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) return Tensor({0, 0});
  const std::size_t m = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.dim(0) != m) {
      throw DimensionError("concat_cols: row count mismatch " +
                           shape_str(parts.front().shape()) + " vs " +
                           shape_str(p.shape()));
    }
    total += p.dim(1);
  }
  Tensor y({m, total});
  for (std::size_t i = 0; i < m; ++i) {
    auto dst = y.row(i).begin();
    for (const auto& p : parts) dst = std::copy(p.row(i).begin(), p.row(i).end(), dst);
  }
  return y;
}

Tensor transpose(const Tensor& x) {
  require_rank2(x, "transpose");
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor y({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y.at(j, i) = x.at(i, j);
  return y;
}

Tensor scale(const Tensor& x, float factor) {
  Tensor y = x;
  for (float& v : y.data()) v *= factor;
  return y;
}

float dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: width mismatch " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  }
  float s = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace axir
