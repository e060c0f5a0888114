#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace aerialtx::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major float32 array. Images use H x W x C layout with the
// channel innermost; kernels use (kh, kw, in, out).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  std::vector<float>& storage() { return data_; }
  const std::vector<float>& storage() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // 3-D accessor for H x W x C tensors.
  float& at(std::size_t y, std::size_t x, std::size_t c) {
    return data_[(y * shape_[1] + x) * shape_[2] + c];
  }
  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * shape_[1] + x) * shape_[2] + c];
  }

  Tensor reshaped(Shape shape) const;
  void fill(float v);
  bool all_finite() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(float s);

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);

// Sum of squares accumulated in double.
double sum_squares(const Tensor& t);
double max_abs(const Tensor& t);

}  // namespace aerialtx::nn
