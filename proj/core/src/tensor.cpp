#include "rebarnet/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "rebarnet/errors.hpp"

namespace rebarnet {

std::size_t checked_numel(const std::vector<int>& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw ShapeError("tensor rank must be 1..4, got " +
                     std::to_string(shape.size()));
  }
  std::size_t n = 1;
  for (int e : shape) {
    if (e < 1) {
      throw ShapeError("tensor extent must be >= 1, got " + std::to_string(e) +
                       " in " + Tensor::shape_str(shape));
    }
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape) {
  const std::size_t n = checked_numel(shape);
  shape_ = std::move(shape);
  data_.assign(n, 0.0);
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data) {
  const std::size_t n = checked_numel(shape);
  if (n != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

namespace {

[[noreturn]] void bad_rank(int want, int have) {
  throw ShapeError("indexing with " + std::to_string(want) +
                   " coordinates into rank-" + std::to_string(have) +
                   " tensor");
}

}  // namespace

double& Tensor::at(int i) {
  if (rank() != 1) bad_rank(1, rank());
  return data_[static_cast<std::size_t>(i)];
}

double& Tensor::at(int i, int j) {
  if (rank() != 2) bad_rank(2, rank());
  return data_[static_cast<std::size_t>(i) * shape_[1] + j];
}

double& Tensor::at(int i, int j, int k) {
  if (rank() != 3) bad_rank(3, rank());
  return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
}

double& Tensor::at(int i, int j, int k, int l) {
  if (rank() != 4) bad_rank(4, rank());
  return data_[((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) *
                   shape_[3] +
               l];
}

double Tensor::at(int i) const { return const_cast<Tensor*>(this)->at(i); }
double Tensor::at(int i, int j) const {
  return const_cast<Tensor*>(this)->at(i, j);
}
double Tensor::at(int i, int j, int k) const {
  return const_cast<Tensor*>(this)->at(i, j, k);
}
double Tensor::at(int i, int j, int k, int l) const {
  return const_cast<Tensor*>(this)->at(i, j, k, l);
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  const std::size_t n = checked_numel(shape);
  if (n != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str() + " to " +
                     shape_str(shape) + ": element count differs");
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = data_;
  return t;
}

void Tensor::fill(double value) { data_.assign(data_.size(), value); }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string Tensor::shape_str() const { return shape_str(shape_); }

}  // namespace rebarnet
