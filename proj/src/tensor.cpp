#include "mrinet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mrinet/kernels.hpp"
#include "mrinet/rng.hpp"

namespace mrinet {

namespace {

std::vector<std::size_t> validate_dims(const std::vector<std::int64_t>& dims,
                                       std::size_t& numel) {
  std::vector<std::size_t> out;
  out.reserve(dims.size());
  numel = 1;
  for (std::int64_t d : dims) {
    if (d < 1) {
      throw ShapeError("shape dimension must be >= 1, got " + std::to_string(d));
    }
    const auto ud = static_cast<std::size_t>(d);
    if (numel > std::numeric_limits<std::size_t>::max() / ud) {
      throw ShapeError("shape element count overflows");
    }
    numel *= ud;
    out.push_back(ud);
  }
  return out;
}

void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) {
    throw NumericError(std::string(op) + ": result contains NaN or Inf");
  }
}

double apply(double a, double b, BinaryOp op) {
  switch (op) {
    case BinaryOp::add: return a + b;
    case BinaryOp::sub: return a - b;
    case BinaryOp::mul: return a * b;
    case BinaryOp::div:
      if (b == 0.0) {
        throw NumericError("elementwise: division by zero");
      }
      return a / b;
  }
  return 0.0;
}

}  // namespace

Shape::Shape(std::initializer_list<std::int64_t> dims)
    : Shape(std::vector<std::int64_t>(dims)) {}

Shape::Shape(const std::vector<std::int64_t>& dims) {
  std::size_t n = 1;
  dims_ = validate_dims(dims, n);
  numel_ = n;
}

Shape Shape::drop(std::size_t axis) const {
  if (axis >= dims_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(dims_.size()));
  }
  std::vector<std::int64_t> d;
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i != axis) d.push_back(static_cast<std::int64_t>(dims_[i]));
  }
  return Shape(d);
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    os << (i ? "," : "") << dims_[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.str());
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.numel() != numel()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor tensor_new(const Shape& shape, double fill) { return Tensor(shape, fill); }

Tensor tensor_random(const Shape& shape, Uniform dist, SeededRng& rng) {
  if (!(dist.low <= dist.high) || !std::isfinite(dist.low) || !std::isfinite(dist.high)) {
    throw std::invalid_argument("tensor_random: uniform requires finite low <= high");
  }
  Tensor t(shape);
  for (double& v : t.data()) v = rng.uniform(dist.low, dist.high);
  return t;
}

Tensor tensor_random(const Shape& shape, Gaussian dist, SeededRng& rng) {
  if (!(dist.stddev >= 0.0) || !std::isfinite(dist.mean) || !std::isfinite(dist.stddev)) {
    throw std::invalid_argument("tensor_random: gaussian requires finite mean and stddev >= 0");
  }
  Tensor t(shape);
  for (double& v : t.data()) v = rng.gaussian(dist.mean, dist.stddev);
  return t;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul: operands must be rank 2, got " + a.shape().str() + " and " +
                     b.shape().str());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ: " + a.shape().str() + " x " +
                     b.shape().str());
  }
  Tensor c(Shape{static_cast<std::int64_t>(m), static_cast<std::int64_t>(n)});
  kernels::gemm_nn(m, n, k, a.raw(), b.raw(), c.raw(), false);
  check_finite(c, "matmul");
  return c;
}

Tensor reduce(const Tensor& t, std::size_t axis, ReduceKind kind) {
  Shape out_shape = t.shape().drop(axis);
  const auto& dims = t.shape().dims();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= dims[i];
  for (std::size_t i = axis + 1; i < dims.size(); ++i) inner *= dims[i];
  const std::size_t len = dims[axis];

  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const double* base = t.raw() + o * len * inner + in;
      double acc = (kind == ReduceKind::max) ? base[0] : 0.0;
      for (std::size_t i = (kind == ReduceKind::max) ? 1 : 0; i < len; ++i) {
        const double v = base[i * inner];
        acc = (kind == ReduceKind::max) ? std::max(acc, v) : acc + v;
      }
      if (kind == ReduceKind::mean) acc /= static_cast<double>(len);
      out[o * inner + in] = acc;
    }
  }
  check_finite(out, "reduce");
  return out;
}

Tensor elementwise(const Tensor& t, const Tensor& u, BinaryOp op) {
  if (u.numel() == 1 && t.shape() != u.shape()) return elementwise(t, u[0], op);
  if (t.numel() == 1 && t.shape() != u.shape()) {
    Tensor out(u.shape());
    for (std::size_t i = 0; i < u.numel(); ++i) out[i] = apply(t[0], u[i], op);
    check_finite(out, "elementwise");
    return out;
  }
  if (t.shape() != u.shape()) {
    throw ShapeError("elementwise: shape mismatch " + t.shape().str() + " vs " +
                     u.shape().str());
  }
  Tensor out(t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) out[i] = apply(t[i], u[i], op);
  check_finite(out, "elementwise");
  return out;
}

Tensor elementwise(const Tensor& t, double s, BinaryOp op) {
  Tensor out(t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) out[i] = apply(t[i], s, op);
  check_finite(out, "elementwise");
  return out;
}

}  // namespace mrinet
