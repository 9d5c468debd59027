#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dvk/error.hpp"

namespace dvk {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

// Dense row-major tensor of f64, rank 1..4. The value carrier for the whole
// toolkit. Invariant: data().size() == product of shape() at all times.
class Tensor {
 public:
  Tensor() = default;

  // Zero-filled tensor of the given shape.
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor full(Shape shape, double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const;

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }
  const double* raw() const { return data_.data(); }
  double* raw() { return data_.data(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // Rank-checked multi-index access (row-major).
  double& at(std::size_t i);
  double& at(std::size_t i, std::size_t j);
  double& at(std::size_t i, std::size_t j, std::size_t k);
  double& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l);
  double at(std::size_t i) const;
  double at(std::size_t i, std::size_t j) const;
  double at(std::size_t i, std::size_t j, std::size_t k) const;
  double at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  double min() const;
  double max() const;
  double sum() const;  // fixed left-to-right order, bit-reproducible

  bool all_finite() const;
  // Throws NumericError naming `what` if any entry is NaN/Inf.
  void ensure_finite(const char* what) const;

  void fill(double value);

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Throws ValueError unless both tensors have identical shapes.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

std::size_t shape_product(const Shape& shape);

// Row-major reinterpretation; product of dims must match.
Tensor reshape(const Tensor& x, const Shape& new_shape);

// Crops the leading `target.size()` axes to the centered window given by
// `target`, keeping trailing axes whole. When the excess along an axis is
// odd, floor(excess/2) is removed on the low-index side and the remainder on
// the high-index side.
Tensor center_crop(const Tensor& x, const Shape& target);

}  // namespace dvk
