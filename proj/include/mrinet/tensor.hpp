#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "mrinet/error.hpp"

namespace mrinet {

class SeededRng;

// Ordered list of positive extents. Rank 0 (no dims) is a scalar.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::int64_t> dims);
  explicit Shape(const std::vector<std::int64_t>& dims);

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
  std::size_t numel() const { return numel_; }
  const std::vector<std::size_t>& dims() const { return dims_; }

  // Copy with `axis` removed.
  Shape drop(std::size_t axis) const;

  std::string str() const;

  bool operator==(const Shape&) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::size_t numel_ = 1;
};

// Dense row-major double tensor. 4-D activations are NCHW.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.rank(); }
  std::size_t dim(std::size_t axis) const { return shape_[axis]; }
  std::size_t numel() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  // Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const;

  // Bitwise comparison of shape and values.
  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_ = {0.0};
};

Tensor tensor_new(const Shape& shape, double fill);

struct Uniform {
  double low = 0.0;
  double high = 1.0;
};
struct Gaussian {
  double mean = 0.0;
  double stddev = 1.0;
};

Tensor tensor_random(const Shape& shape, Uniform dist, SeededRng& rng);
Tensor tensor_random(const Shape& shape, Gaussian dist, SeededRng& rng);

// c[i][j] = sum_p a[i][p] * b[p][j], p ascending.
Tensor matmul(const Tensor& a, const Tensor& b);

enum class ReduceKind { sum, mean, max };

// Removes `axis`. Accumulation runs along the axis in index order.
Tensor reduce(const Tensor& t, std::size_t axis, ReduceKind kind);

enum class BinaryOp { add, sub, mul, div };

// Shapes must match exactly, or one side must hold a single element.
// Division by zero throws NumericError.
Tensor elementwise(const Tensor& t, const Tensor& u, BinaryOp op);
Tensor elementwise(const Tensor& t, double s, BinaryOp op);

}  // namespace mrinet
