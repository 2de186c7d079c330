#include "mpt/numerics/dense_array.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "mpt/error.hpp"

namespace mpt {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

DenseArray::DenseArray(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

DenseArray::DenseArray(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
  }
}

DenseArray DenseArray::scalar(double value) { return DenseArray(Shape{}, std::vector<double>{value}); }

std::size_t DenseArray::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw ShapeError("index rank " + std::to_string(index.size()) + " for shape " + shape_string(shape_));
  }
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) throw ShapeError("index out of range for shape " + shape_string(shape_));
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

double& DenseArray::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }

double DenseArray::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

double DenseArray::item() const {
  if (data_.size() != 1) throw ShapeError("item() on array of shape " + shape_string(shape_));
  return data_[0];
}

bool DenseArray::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void DenseArray::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

DenseArray DenseArray::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return DenseArray(std::move(shape), data_);
}

double max_abs_diff(const DenseArray& a, const DenseArray& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace mpt
