#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "pfgen/errors.hpp"

namespace pfgen {

using Index = std::int64_t;

// Dense float32 tensor of rank 1..3, row-major. Shapes are fixed at
// construction; zero extents are legal (empty operands of concatenation).
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<Index> shape) : shape_(std::move(shape)) {
    require(!shape_.empty() && shape_.size() <= 3, ErrorCategory::dimension,
            "Tensor: rank must be 1, 2, or 3");
    Index n = 1;
    for (Index e : shape_) {
      require(e >= 0, ErrorCategory::dimension, "Tensor: negative extent");
      n *= e;
    }
    data_.assign(static_cast<std::size_t>(n), 0.0f);
  }

  static Tensor zeros(std::vector<Index> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<Index> shape, float v) {
    Tensor t(std::move(shape));
    for (float& x : t.data_) x = v;
    return t;
  }

  static Tensor of(std::vector<Index> shape, std::initializer_list<float> values) {
    Tensor t(std::move(shape));
    require(static_cast<Index>(values.size()) == t.size(), ErrorCategory::dimension,
            "Tensor::of: value count does not match shape");
    std::size_t i = 0;
    for (float v : values) t.data_[i++] = v;
    return t;
  }

  int rank() const { return static_cast<int>(shape_.size()); }

  Index extent(int axis) const {
    require(axis >= 0 && axis < rank(), ErrorCategory::dimension,
            "Tensor::extent: axis out of range");
    return shape_[static_cast<std::size_t>(axis)];
  }

  const std::vector<Index>& shape() const { return shape_; }

  Index size() const { return static_cast<Index>(data_.size()); }

  bool empty() const { return data_.empty() && shape_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
  float operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

  float& operator()(Index i) { return data_[static_cast<std::size_t>(i)]; }
  float operator()(Index i) const { return data_[static_cast<std::size_t>(i)]; }

  float& operator()(Index i, Index j) {
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
  }
  float operator()(Index i, Index j) const {
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
  }

  float& operator()(Index i, Index j, Index k) {
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  float operator()(Index i, Index j, Index k) const {
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (float v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

 private:
  std::vector<Index> shape_;
  std::vector<float> data_;
};

// Number of rows when the last axis is interpreted as channels.
inline Index row_count(const Tensor& t) {
  Index c = t.extent(t.rank() - 1);
  return c == 0 ? 0 : t.size() / c;
}

}  // namespace pfgen
