#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mpt {

using Shape = std::vector<std::size_t>;

/// Product of extents; 1 for the rank-0 (scalar) shape.
std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Row-major dense array of doubles.
///
/// Extents may be zero so that empty collections (a scene with no detected
/// groups, for instance) flow through the same code paths as populated ones.
class DenseArray {
 public:
  DenseArray() = default;
  explicit DenseArray(Shape shape, double fill = 0.0);
  DenseArray(Shape shape, std::vector<double> data);

  static DenseArray scalar(double value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;

  /// Value of a one-element array.
  double item() const;

  bool all_finite() const noexcept;
  void fill(double value);

  /// Same data under a new shape of equal size.
  DenseArray reshaped(Shape shape) const;

  friend bool operator==(const DenseArray&, const DenseArray&) = default;

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<double> data_;
};

/// Largest absolute elementwise difference; throws ShapeError on mismatch.
double max_abs_diff(const DenseArray& a, const DenseArray& b);

}  // namespace mpt
