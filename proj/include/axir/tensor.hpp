#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace axir {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

/// Dense row-major f32 array. The only numeric carrier in the engine.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<float> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  // 2-D accessors; rank-1 tensors are viewed as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  const std::vector<float>& values() const { return data_; }

  std::span<float> row(std::size_t r);
  std::span<const float> row(std::size_t r) const;

  float& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  float at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Kernels below are OpenMP-parallel over rows. Every output element is
// reduced in a fixed left-to-right order, so results are bitwise identical
// to the serial reference kernels in kernels_serial.hpp for any thread count.

/// c = a·b with a [m×k], b [k×n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Row-wise softmax with row-max subtraction. `mask` is empty (no masking)
/// or has one byte per element; entries with mask 0 come out exactly 0.
/// Throws DegenerateRowError when a row is fully masked.
Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> mask = {});

/// Per-row (x−mean)/sqrt(var+eps)·gamma + beta, population variance.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps);

/// Exact GELU, x·Φ(x) = 0.5·x·(1 + erf(x/√2)).
Tensor gelu(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& a, const Tensor& b);

/// x [m×n] + bias [n] broadcast over rows.
Tensor add_bias_rows(const Tensor& x, const Tensor& bias);

/// Columns [begin, end) of a 2-D tensor.
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);

/// Rows [begin, end) of a 2-D tensor.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);

Tensor concat_cols(std::span<const Tensor> parts);

Tensor transpose(const Tensor& x);

Tensor scale(const Tensor& x, float factor);

float dot(std::span<const float> a, std::span<const float> b);

}  // namespace axir
