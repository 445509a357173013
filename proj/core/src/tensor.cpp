#include "jras/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "jras/errors.hpp"

namespace jras {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ArgumentError("negative dimension in shape " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  if (static_cast<std::int64_t>(values_.size()) != shape_numel(shape_)) {
    throw ArgumentError("tensor of shape " + shape_to_string(shape_) + " given " +
                        std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw ArgumentError("cannot reshape " + shape_to_string(shape_) + " to " +
                        shape_to_string(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!same_shape(*this, other)) {
    throw ArgumentError("shape mismatch in +=: " + shape_to_string(shape_) + " vs " +
                        shape_to_string(other.shape_));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Tensor& Tensor::operator*=(double factor) {
  for (auto& v : values_) v *= factor;
  return *this;
}

bool same_shape(const Tensor& a, const Tensor& b) noexcept { return a.shape() == b.shape(); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) throw ArgumentError("max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) throw ArgumentError("dot: size mismatch");
  return std::inner_product(a.data(), a.data() + a.numel(), b.data(), 0.0);
}

}  // namespace jras
