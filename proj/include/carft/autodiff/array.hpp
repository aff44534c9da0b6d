// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_AUTODIFF_ARRAY_HPP_
#define CARFT_AUTODIFF_ARRAY_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace carft::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles. A rank-0 shape is a scalar.
class Array {
 public:
  // Scalar zero.
  Array();
  explicit Array(Shape shape, double fill = 0.0);
  // Validates that the data length matches the shape and every entry is finite.
  Array(Shape shape, std::vector<double> data);

  static Array scalar(double value);
  static Array vector(std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  // Extent of the last axis (1 for scalars).
  std::size_t last_dim() const noexcept { return shape_.empty() ? 1 : shape_.back(); }
  // Number of rows when viewed as [size / last_dim, last_dim].
  std::size_t outer_size() const noexcept { return size() / last_dim(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const double* ptr() const noexcept { return data_.data(); }
  double* ptr() noexcept { return data_.data(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // Value of a single-element array.
  double item() const;

  Array reshaped(Shape shape) const;

  bool all_finite() const noexcept;

  // Bitwise-equal shapes and values (IEEE ==, so -0.0 equals 0.0).
  friend bool operator==(const Array& a, const Array& b) = default;

 private:
  struct Unchecked {};
  Array(Unchecked, Shape shape, std::vector<double> data);
  friend Array make_unchecked(Shape shape, std::vector<double> data);

  Shape shape_;
  std::vector<double> data_;
};

// Skips the finiteness scan; for internal kernels whose outputs are checked
// elsewhere or are finite by construction.
Array make_unchecked(Shape shape, std::vector<double> data);

}  // namespace carft::ad

#endif  // CARFT_AUTODIFF_ARRAY_HPP_
