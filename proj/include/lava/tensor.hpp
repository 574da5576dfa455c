#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "lava/common.hpp"

namespace lava {

// Dense row-major tensor of rank 1..3, laid out (batch, channels, time).
// Training and inference use float; the double instantiation exists for
// gradient checking.
template <class T>
class TensorT {
public:
  TensorT() = default;

  explicit TensorT(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(static_cast<size_t>(numel()), T(0));
  }

  TensorT(std::initializer_list<int64_t> shape, std::vector<T> data)
      : shape_(shape), data_(std::move(data)) {
    validate_shape();
    if (static_cast<int64_t>(data_.size()) != numel())
      throw ValidationError("tensor data length does not match shape");
  }

  static TensorT zeros(std::vector<int64_t> shape) { return TensorT(std::move(shape)); }

  static TensorT full(std::vector<int64_t> shape, T v) {
    TensorT t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }

  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : shape_) n *= d;
    return shape_.empty() ? 0 : n;
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& at(int64_t i) { return data_[static_cast<size_t>(i)]; }
  T at(int64_t i) const { return data_[static_cast<size_t>(i)]; }

  T& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
  T at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }

  T& at(int64_t i, int64_t j, int64_t k) {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  T at(int64_t i, int64_t j, int64_t k) const {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ")";
    return os.str();
  }

  template <class U>
  TensorT<U> cast() const {
    TensorT<U> out(shape_);
    for (int64_t i = 0; i < numel(); ++i) out.at(i) = static_cast<U>(data_[static_cast<size_t>(i)]);
    return out;
  }

private:
  void validate_shape() const {
    if (shape_.empty() || shape_.size() > 3)
      throw ValidationError("tensor rank must be 1..3");
    for (int64_t d : shape_)
      if (d <= 0) throw ValidationError("tensor dims must be positive");
  }

  std::vector<int64_t> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

}  // namespace lava
