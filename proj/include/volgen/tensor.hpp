// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace volgen {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense, contiguous float32 tensor with shared storage. Reshapes alias the
// same buffer; clone() makes a deep copy. All NN-facing state lives in these.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape) : Tensor(std::move(shape), 0.0f) {}
  Tensor(Shape shape, float fill);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, float v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(float v) { return Tensor({1}, v); }

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t numel() const { return defined() ? static_cast<int64_t>(data_->size()) : 0; }

  float* data() { return data_->data(); }
  const float* data() const { return data_->data(); }

  float& operator[](int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

  float item() const;

  Tensor clone() const;
  Tensor reshaped(Shape new_shape) const;  // aliases storage
  void fill(float v);
  void zero() { fill(0.0f); }

  bool all_finite() const;
  float sum() const;
  float min() const;
  float max() const;
  double mean() const;

  // flat offset of a multi-index, row-major
  int64_t offset(const std::vector<int64_t>& idx) const;
  float at(const std::vector<int64_t>& idx) const { return (*this)[offset(idx)]; }
  float& at(const std::vector<int64_t>& idx) { return (*this)[offset(idx)]; }

 private:
  Shape shape_;
  std::shared_ptr<std::vector<float>> data_;
};

void check(bool cond, const std::string& msg);

}  // namespace volgen
