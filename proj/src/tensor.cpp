// SPDX-License-Identifier: Apache-2.0
#include "volgen/tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace volgen {

void check(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  data_ = std::make_shared<std::vector<float>>(static_cast<size_t>(shape_numel(shape_)), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)) {
  check(shape_numel(shape_) == static_cast<int64_t>(values.size()),
        "Tensor: value count does not match shape " + shape_str(shape_));
  data_ = std::make_shared<std::vector<float>>(std::move(values));
}

float Tensor::item() const {
  check(numel() == 1, "Tensor::item on non-scalar " + shape_str(shape_));
  return (*data_)[0];
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  if (data_) t.data_ = std::make_shared<std::vector<float>>(*data_);
  return t;
}

Tensor Tensor::reshaped(Shape new_shape) const {
  check(shape_numel(new_shape) == numel(),
        "reshape mismatch: " + shape_str(shape_) + " -> " + shape_str(new_shape));
  Tensor t;
  t.shape_ = std::move(new_shape);
  t.data_ = data_;
  return t;
}

void Tensor::fill(float v) {
  for (auto& x : *data_) x = v;
}

bool Tensor::all_finite() const {
  for (float x : *data_)
    if (!std::isfinite(x)) return false;
  return true;
}

float Tensor::sum() const {
  double acc = 0.0;
  for (float x : *data_) acc += x;
  return static_cast<float>(acc);
}

float Tensor::min() const {
  float m = std::numeric_limits<float>::infinity();
  for (float x : *data_) m = std::min(m, x);
  return m;
}

float Tensor::max() const {
  float m = -std::numeric_limits<float>::infinity();
  for (float x : *data_) m = std::max(m, x);
  return m;
}

double Tensor::mean() const {
  return numel() == 0 ? 0.0 : static_cast<double>(sum()) / static_cast<double>(numel());
}

int64_t Tensor::offset(const std::vector<int64_t>& idx) const {
  check(idx.size() == shape_.size(), "index rank mismatch");
  int64_t off = 0;
  for (size_t i = 0; i < idx.size(); ++i) {
    off = off * shape_[i] + idx[i];
  }
  return off;
}

}  // namespace volgen
