#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mkh {

using Shape = std::vector<std::size_t>;

/// Raised when operand shapes are incompatible with an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation is evaluated outside its mathematical domain
/// or produces a non-finite value.
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major array of doubles. Rank-0 (empty shape) holds one scalar.
class Array {
 public:
  Array() = default;
  explicit Array(Shape shape, double fill = 0.0);
  Array(Shape shape, std::vector<double> data);

  static Array scalar(double value);
  static Array matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  static Array identity(std::size_t n);
  static Array from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Array vector(std::initializer_list<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const;

  // Rank-2 helpers. A rank-1 array is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  double item() const;

  /// Same data, new shape with equal element count.
  Array reshaped(Shape shape) const;
  Array transposed() const;

  bool all_finite() const noexcept;
  bool operator==(const Array& other) const noexcept = default;

 private:
  void update_cols() noexcept;

  Shape shape_;
  std::vector<double> data_;
  std::size_t cols_ = 1;
};

}  // namespace mkh
