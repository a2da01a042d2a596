#include "promptforge/numerics/tensor.hpp"

#include "promptforge/error.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace promptforge::numerics {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {
void check_extents(const Shape& shape) {
  if (shape.empty()) throw ContractViolation("tensor shape must have rank >= 1");
  for (auto e : shape)
    if (e == 0) throw ContractViolation("tensor extents must be positive: " + shape_string(shape));
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  values_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  check_extents(shape_);
  if (values_.size() != shape_size(shape_))
    throw ContractViolation("value count " + std::to_string(values_.size()) +
                            " does not match shape " + shape_string(shape_));
}

Tensor Tensor::scalar(double v) { return Tensor({1, 1}, std::vector<double>{v}); }

Tensor Tensor::row(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  return Tensor({rows, cols}, fill);
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ContractViolation("ragged rows");
    v.insert(v.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(v));
}

std::size_t Tensor::rows() const {
  if (shape_.size() == 1) return 1;
  if (shape_.size() == 2) return shape_[0];
  throw ContractViolation("matrix view requires rank <= 2, got " + shape_string(shape_));
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 1) return shape_[0];
  if (shape_.size() == 2) return shape_[1];
  throw ContractViolation("matrix view requires rank <= 2, got " + shape_string(shape_));
}

Tensor Tensor::row_copy(std::size_t r) const {
  auto s = row_span(r);
  return Tensor::row(std::vector<double>(s.begin(), s.end()));
}

MatrixMap Tensor::mat() {
  return MatrixMap(values_.data(), static_cast<Eigen::Index>(rows()),
                   static_cast<Eigen::Index>(cols()));
}

ConstMatrixMap Tensor::mat() const {
  return ConstMatrixMap(values_.data(), static_cast<Eigen::Index>(rows()),
                        static_cast<Eigen::Index>(cols()));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != values_.size())
    throw ContractViolation("reshape to " + shape_string(shape) + " changes the element count");
  Tensor t;
  t.shape_ = std::move(shape);
  check_extents(t.shape_);
  t.values_ = values_;
  return t;
}

bool Tensor::all_finite() const noexcept {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

bool operator==(const Tensor& a, const Tensor& b) noexcept {
  if (a.shape_ != b.shape_) return false;
  return a.values_.empty() ||
         std::memcmp(a.values_.data(), b.values_.data(), a.values_.size() * sizeof(double)) == 0;
}

Tensor from_matrix(const RowMatrix& m) {
  Tensor t = Tensor::matrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  t.mat() = m;
  return t;
}

}  // namespace promptforge::numerics
