// SPDX-License-Identifier: Apache-2.0
#include "oliera/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "oliera/error.hpp"
#include "oliera/kernels.hpp"

namespace oliera {
namespace {

std::size_t checked_numel(const Shape& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw ShapeError("tensor rank must be 1 or 2, got shape " + to_string(shape));
  }
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("zero dimension in shape " + to_string(shape));
    n *= d;
  }
  return n;
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) { data_.assign(checked_numel(shape_), 0.0); }

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_numel(shape_) != data_.size()) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     to_string(shape_));
  }
}

Tensor Tensor::full(const Shape& shape, double value) {
  Tensor t(shape);
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) throw ShapeError("empty matrix literal");
  const std::size_t cols = rows.begin()->size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& row : rows) {
    if (row.size() != cols) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape_));
  return data_[0];
}

bool Tensor::bit_equal(const Tensor& other) const noexcept {
  return shape_ == other.shape_ &&
         (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

Tensor ones(const Shape& shape) { return Tensor::full(shape, 1.0); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

bool all_finite(const Tensor& t) noexcept {
  return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::isfinite(v); });
}

void require_finite(const Tensor& t, const char* op) {
  if (!all_finite(t)) throw NumericError(std::string(op) + ": non-finite result");
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out(a.shape());
  kernels::active().mul(a.data().data(), b.data().data(), out.data().data(), out.numel());
  require_finite(out, "hadamard");
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  kernels::active().add(a.data().data(), b.data().data(), out.data().data(), out.numel());
  require_finite(out, "add");
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  kernels::active().sub(a.data().data(), b.data().data(), out.data().data(), out.numel());
  require_finite(out, "sub");
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  kernels::active().scale(a.data().data(), s, out.data().data(), out.numel());
  require_finite(out, "scale");
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul: operands must be rank 2, got " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  Tensor out({a.rows(), b.cols()});
  kernels::active().gemm(a.data().data(), b.data().data(), out.data().data(), a.rows(), a.cols(),
                         b.cols());
  require_finite(out, "matmul");
  return out;
}

Tensor transpose(const Tensor& m) {
  if (m.rank() != 2) throw ShapeError("transpose: rank-2 tensor required");
  Tensor out({m.cols(), m.rows()});
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
  }
  return out;
}

Tensor exp_series(const Tensor& x, int order) {
  if (order < 0 || order > kernels::kMaxTaylorOrder) {
    throw ContractError("exp_series: order " + std::to_string(order) + " out of range");
  }
  Tensor out(x.shape());
  kernels::active().exp_taylor(x.data().data(), out.data().data(), out.numel(), order);
  require_finite(out, "exp_series");
  return out;
}

double sorted_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc;
}

double frobenius_norm(const Tensor& m) {
  std::vector<double> squares(m.numel());
  kernels::active().mul(m.data().data(), m.data().data(), squares.data(), squares.size());
  return std::sqrt(sorted_sum(std::move(squares)));
}

double l1_norm(const Tensor& m) {
  double acc = 0.0;
  for (double v : m.data()) acc += std::fabs(v);
  return acc;
}

double sum(const Tensor& m) {
  double acc = 0.0;
  for (double v : m.data()) acc += v;
  return acc;
}

double max_abs(const Tensor& m) {
  double best = 0.0;
  for (double v : m.data()) best = std::max(best, std::fabs(v));
  return best;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double best = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) best = std::max(best, std::fabs(a[i] - b[i]));
  return best;
}

}  // namespace oliera
