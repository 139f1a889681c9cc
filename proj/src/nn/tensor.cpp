#include "pseg/nn/tensor.hpp"

#include <algorithm>

#include "pseg/error.hpp"

namespace pseg::nn {

std::string Shape4::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " + std::to_string(w) +
         ")";
}

Tensor4::Tensor4(Shape4 shape, double fill) : shape_(shape) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ValidationError("tensor: negative dimension in " + shape.str());
  }
  data_.assign(shape.count(), fill);
}

Tensor4::Tensor4(Shape4 shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ValidationError("tensor: negative dimension in " + shape.str());
  }
  if (data_.size() != shape.count()) {
    throw ValidationError("tensor: " + std::to_string(data_.size()) + " values for shape " + shape.str());
  }
}

void Tensor4::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor4& Tensor4::operator+=(const Tensor4& other) {
  if (other.shape_ != shape_) {
    throw ValidationError("tensor add: shape mismatch " + shape_.str() + " vs " + other.shape_.str());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

double dot(const Tensor4& a, const Tensor4& b) {
  if (a.shape() != b.shape()) throw ValidationError("dot: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

}  // namespace pseg::nn
