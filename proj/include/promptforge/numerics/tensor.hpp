#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace promptforge::numerics {

using Shape = std::vector<std::size_t>;
// Over-aligned so Eigen kernels see the same alignment on every allocation;
// their reduction order, and so the exact bits, depend on it.
using Storage = std::vector<double, Eigen::aligned_allocator<double>>;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles. Rank-1 tensors behave as a single row
// wherever a matrix view is needed.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor row(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  Storage& storage() noexcept { return values_; }
  const Storage& storage() const noexcept { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  std::span<double> row_span(std::size_t r) { return {values_.data() + r * cols(), cols()}; }
  std::span<const double> row_span(std::size_t r) const {
    return {values_.data() + r * cols(), cols()};
  }
  Tensor row_copy(std::size_t r) const;

  MatrixMap mat();
  ConstMatrixMap mat() const;

  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;

  // Bitwise equality of shape and values.
  friend bool operator==(const Tensor& a, const Tensor& b) noexcept;

 private:
  Shape shape_;
  Storage values_;
};

Tensor from_matrix(const RowMatrix& m);

}  // namespace promptforge::numerics
