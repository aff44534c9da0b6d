// SPDX-License-Identifier: Apache-2.0

#include "carft/autodiff/array.hpp"

#include <cmath>
#include <sstream>

#include "carft/common/error.hpp"

namespace carft::ad {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (std::size_t e : shape) {
    if (e == 0) throw Error("autodiff", "zero extent in shape " + shape_string(shape));
  }
}

}  // namespace

Array::Array() : data_(1, 0.0) {}

Array::Array(Shape shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  if (!std::isfinite(fill)) throw Error("autodiff", "non-finite fill value");
  data_.assign(shape_size(shape_), fill);
}

Array::Array(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (shape_size(shape_) != data_.size()) {
    throw Error("autodiff", "shape " + shape_string(shape_) + " needs " +
                                std::to_string(shape_size(shape_)) + " values, got " +
                                std::to_string(data_.size()));
  }
  if (!all_finite()) throw Error("autodiff", "non-finite entry in array data");
}

Array::Array(Unchecked, Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {}

Array make_unchecked(Shape shape, std::vector<double> data) {
  return Array(Array::Unchecked{}, std::move(shape), std::move(data));
}

Array Array::scalar(double value) { return Array(Shape{}, std::vector<double>{value}); }

Array Array::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Array(Shape{n}, std::move(values));
}

double Array::item() const {
  if (data_.size() != 1) {
    throw Error("autodiff", "item() on array of shape " + shape_string(shape_));
  }
  return data_[0];
}

Array Array::reshaped(Shape shape) const {
  check_extents(shape);
  if (shape_size(shape) != data_.size()) {
    throw Error("autodiff", "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return make_unchecked(std::move(shape), data_);
}

bool Array::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace carft::ad
