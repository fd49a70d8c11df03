#include "mkh/array.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace mkh {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Array::Array(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto e : shape_) {
    if (e == 0) throw DimensionError("array extents must be positive: " + shape_string(shape_));
  }
  data_.assign(shape_size(shape_), fill);
  update_cols();
}

Array::Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto e : shape_) {
    if (e == 0) throw DimensionError("array extents must be positive: " + shape_string(shape_));
  }
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
  }
  update_cols();
}

Array Array::scalar(double value) { return Array(Shape{}, std::vector<double>{value}); }

Array Array::matrix(std::size_t rows, std::size_t cols, double fill) { return Array({rows, cols}, fill); }

Array Array::identity(std::size_t n) {
  Array out({n, n});
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

Array Array::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) throw DimensionError("from_rows: no rows");
  const std::size_t c = rows.begin()->size();
  std::vector<double> data;
  data.reserve(rows.size() * c);
  for (const auto& r : rows) {
    if (r.size() != c) throw DimensionError("from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Array({rows.size(), c}, std::move(data));
}

Array Array::vector(std::initializer_list<double> values) {
  return Array({values.size()}, std::vector<double>(values));
}

std::size_t Array::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw DimensionError("axis out of range for shape " + shape_string(shape_));
  return shape_[axis];
}

std::size_t Array::rows() const {
  if (shape_.size() <= 1) return 1;
  if (shape_.size() != 2) throw DimensionError("rows(): expected rank <= 2, got " + shape_string(shape_));
  return shape_[0];
}

std::size_t Array::cols() const {
  if (shape_.empty()) return 1;
  if (shape_.size() > 2) throw DimensionError("cols(): expected rank <= 2, got " + shape_string(shape_));
  return shape_.back();
}

double Array::item() const {
  if (data_.size() != 1) throw DimensionError("item(): array is not a scalar: " + shape_string(shape_));
  return data_[0];
}

Array Array::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Array(std::move(shape), data_);
}

Array Array::transposed() const {
  const std::size_t r = rows(), c = cols();
  Array out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = (*this)(i, j);
  return out;
}

bool Array::all_finite() const noexcept {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Array::update_cols() noexcept { cols_ = shape_.empty() ? 1 : shape_.back(); }

}  // namespace mkh
