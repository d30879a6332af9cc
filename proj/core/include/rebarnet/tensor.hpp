#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace rebarnet {

// Dense row-major tensor of doubles, rank 1..4, last dimension fastest.
// Image batches use [N, C, H, W].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::initializer_list<int> shape)
      : Tensor(std::vector<int>(shape)) {}

  static Tensor full(std::vector<int> shape, double value);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data);

  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(int i);
  double& at(int i, int j);
  double& at(int i, int j, int k);
  double& at(int i, int j, int k, int l);
  double at(int i) const;
  double at(int i, int j) const;
  double at(int i, int j, int k) const;
  double at(int i, int j, int k, int l) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // Same data, new shape; element count must match.
  Tensor reshaped(std::vector<int> shape) const;

  void fill(double value);
  bool all_finite() const;

  // "[2, 3, 4]" for diagnostics.
  std::string shape_str() const;
  static std::string shape_str(const std::vector<int>& shape);

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

// Product of extents; validates every extent >= 1 and rank 1..4.
std::size_t checked_numel(const std::vector<int>& shape);

}  // namespace rebarnet
