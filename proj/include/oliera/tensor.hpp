// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major float64 tensors of rank 1 or 2.
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace oliera {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  /// Zero-filled tensor. Throws ShapeError for an empty shape, a zero
  /// dimension, or rank > 2.
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(const Shape& shape) { return Tensor(shape); }
  static Tensor full(const Shape& shape, double value);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }
  /// Rank-2 literal, e.g. Tensor::matrix({{1, 2}, {3, 4}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  /// rows()/cols() treat a rank-1 tensor as a single row.
  std::size_t rows() const noexcept { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  /// Value of a single-element tensor.
  double item() const;

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  /// Bitwise equality of shape and every value.
  bool bit_equal(const Tensor& other) const noexcept;

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor ones(const Shape& shape);

Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& m);
/// Elementwise truncated exponential series sum_{k=0..order} x^k / k!, order >= 0.
Tensor exp_series(const Tensor& x, int order);

double frobenius_norm(const Tensor& m);
double l1_norm(const Tensor& m);
double sum(const Tensor& m);
double max_abs(const Tensor& m);
double max_abs_diff(const Tensor& a, const Tensor& b);

bool all_finite(const Tensor& t) noexcept;
/// Throws NumericError naming `op` if any entry is NaN or Inf.
void require_finite(const Tensor& t, const char* op);
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

/// Sum in ascending order of value. The result depends only on the multiset
/// of inputs, so permuting them (e.g. transposing) cannot change the bits.
double sorted_sum(std::vector<double> values);

}  // namespace oliera
