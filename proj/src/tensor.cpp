#include "smem/tensor.hpp"

#include <sstream>

namespace smem {

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
size_t checked_numel(const std::vector<int>& shape) {
  if (shape.empty()) fail(ErrorKind::kDimension, "tensor shape must have rank >= 1");
  size_t n = 1;
  for (int e : shape) {
    if (e <= 0) fail(ErrorKind::kDimension, "tensor extents must be positive, got " + shape_str(shape));
    n *= static_cast<size_t>(e);
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_numel(shape_) != data_.size()) {
    fail(ErrorKind::kDimension,
         "tensor data length " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
  }
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  for (double& v : t.data_) v = value;
  return t;
}

void Tensor::ensure_grad() {
  if (grad_.empty()) grad_.assign(data_.size(), 0.0);
}

std::vector<double>& Tensor::grad() {
  if (grad_.empty()) fail(ErrorKind::kUsage, "tensor has no gradient buffer");
  return grad_;
}

const std::vector<double>& Tensor::grad() const {
  if (grad_.empty()) fail(ErrorKind::kUsage, "tensor has no gradient buffer");
  return grad_;
}

void Tensor::zero_grad() {
  grad_.assign(data_.size(), 0.0);
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    fail(ErrorKind::kDimension,
         std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

}  // namespace smem
