#include "dvk/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dvk {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw ValueError("tensor dimension must be positive");
    if (n > std::numeric_limits<std::size_t>::max() / d)
      throw ValueError("tensor shape overflows size_t: " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

namespace {

void check_rank(const Shape& shape) {
  if (shape.empty() || shape.size() > 4)
    throw ValueError("tensor rank must be 1..4, got " + std::to_string(shape.size()));
}

}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  check_rank(shape_);
  data_.assign(shape_product(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_rank(shape_);
  if (data_.size() != shape_product(shape_))
    throw ValueError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_to_string(shape_));
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw ValueError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(shape_.size()));
  return shape_[axis];
}

double& Tensor::at(std::size_t i) {
  if (rank() != 1) throw ValueError("1-index access on rank-" + std::to_string(rank()) + " tensor");
  return data_[i];
}

double& Tensor::at(std::size_t i, std::size_t j) {
  if (rank() != 2) throw ValueError("2-index access on rank-" + std::to_string(rank()) + " tensor");
  return data_[i * shape_[1] + j];
}

double& Tensor::at(std::size_t i, std::size_t j, std::size_t k) {
  if (rank() != 3) throw ValueError("3-index access on rank-" + std::to_string(rank()) + " tensor");
  return data_[(i * shape_[1] + j) * shape_[2] + k];
}

double& Tensor::at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
  if (rank() != 4) throw ValueError("4-index access on rank-" + std::to_string(rank()) + " tensor");
  return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
}

double Tensor::at(std::size_t i) const { return const_cast<Tensor*>(this)->at(i); }
double Tensor::at(std::size_t i, std::size_t j) const { return const_cast<Tensor*>(this)->at(i, j); }
double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  return const_cast<Tensor*>(this)->at(i, j, k);
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
  return const_cast<Tensor*>(this)->at(i, j, k, l);
}

double Tensor::min() const {
  if (data_.empty()) throw ValueError("min of empty tensor");
  return *std::min_element(data_.begin(), data_.end());
}

double Tensor::max() const {
  if (data_.empty()) throw ValueError("max of empty tensor");
  return *std::max_element(data_.begin(), data_.end());
}

double Tensor::sum() const {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::ensure_finite(const char* what) const {
  if (!all_finite())
    throw NumericError(std::string(what) + ": non-finite value in tensor " +
                       shape_to_string(shape_));
}

void Tensor::fill(double value) { std::ranges::fill(data_, value); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw ValueError(std::string(what) + ": shape mismatch " + shape_to_string(a.shape()) +
                     " vs " + shape_to_string(b.shape()));
}

Tensor reshape(const Tensor& x, const Shape& new_shape) {
  check_rank(new_shape);
  if (shape_product(new_shape) != x.size())
    throw ValueError("reshape " + shape_to_string(x.shape()) + " -> " +
                     shape_to_string(new_shape) + ": element count mismatch");
  return Tensor(new_shape, x.data());
}

Tensor center_crop(const Tensor& x, const Shape& target) {
  const Shape& src = x.shape();
  if (target.empty() || target.size() > src.size())
    throw ValueError("center_crop: target rank " + std::to_string(target.size()) +
                     " invalid for source rank " + std::to_string(src.size()));

  Shape out_shape = src;
  Shape offset(src.size(), 0);
  for (std::size_t a = 0; a < target.size(); ++a) {
    if (target[a] > src[a])
      throw ValueError("center_crop: target " + shape_to_string(target) +
                       " exceeds source " + shape_to_string(src));
    if (target[a] == 0) throw ValueError("center_crop: zero target dimension");
    out_shape[a] = target[a];
    offset[a] = (src[a] - target[a]) / 2;  // excess remainder is dropped high
  }

  Tensor out(out_shape);
  // Walk output indices; rank <= 4 so four nested loops cover every case.
  Shape idx(4, 0), dims(4, 1), src_dims(4, 1), off(4, 0);
  for (std::size_t a = 0; a < src.size(); ++a) {
    dims[a] = out_shape[a];
    src_dims[a] = src[a];
    off[a] = offset[a];
  }
  std::size_t w = 0;
  for (idx[0] = 0; idx[0] < dims[0]; ++idx[0])
    for (idx[1] = 0; idx[1] < dims[1]; ++idx[1])
      for (idx[2] = 0; idx[2] < dims[2]; ++idx[2])
        for (idx[3] = 0; idx[3] < dims[3]; ++idx[3]) {
          std::size_t r = 0;
          for (std::size_t a = 0; a < 4; ++a) r = r * src_dims[a] + (idx[a] + off[a]);
          out[w++] = x[r];
        }
  return out;
}

}  // namespace dvk
