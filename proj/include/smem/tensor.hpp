#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "smem/error.hpp"

namespace smem {

std::string shape_str(const std::vector<int>& shape);

// Dense row-major tensor of 64-bit floats with an optional same-shape
// gradient buffer. All training math runs in double; 32-bit storage only
// appears inside feature files and is widened on load.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double value);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int extent(int axis) const { return shape_[static_cast<size_t>(axis)]; }
  int numel() const { return static_cast<int>(data_.size()); }
  // rank-2 helpers
  int rows() const { return shape_[0]; }
  int cols() const { return shape_[1]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }
  double& operator[](int i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int i) const { return data_[static_cast<size_t>(i)]; }
  double& at(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
  double at(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }

  bool has_grad() const { return !grad_.empty(); }
  // Allocates a zeroed gradient buffer if absent.
  void ensure_grad();
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();
  void drop_grad() { grad_.clear(); }

  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_string() const { return shape_str(shape_); }

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
  std::vector<double> grad_;  // empty means absent
};

// Throws a dimension error naming both shapes unless they are equal.
void check_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace smem
