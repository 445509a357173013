#pragma once

#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace jras {

using Shape = std::vector<std::int64_t>;

// Cache-line aligned storage. Vectorised reductions sum in an order that
// depends on buffer alignment, so fixing it keeps results independent of
// allocation history (a resumed run must match a straight one bitwise).
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
    return true;
  }
};

using AlignedDoubles = std::vector<double, AlignedAllocator<double>>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major array of doubles. Images are {C, H, W}, matrices
// {rows, cols}, vectors {n}. Scalars are stored as {1}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::int64_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::int64_t numel() const noexcept { return static_cast<std::int64_t>(values_.size()); }
  bool empty() const noexcept { return values_.empty(); }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  double& operator[](std::int64_t i) { return values_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return values_[static_cast<std::size_t>(i)]; }

  double& at(std::int64_t row, std::int64_t col) {
    return values_[static_cast<std::size_t>(row * shape_[1] + col)];
  }
  double at(std::int64_t row, std::int64_t col) const {
    return values_[static_cast<std::size_t>(row * shape_[1] + col)];
  }
  double& at(std::int64_t c, std::int64_t h, std::int64_t w) {
    return values_[static_cast<std::size_t>((c * shape_[1] + h) * shape_[2] + w)];
  }
  double at(std::int64_t c, std::int64_t h, std::int64_t w) const {
    return values_[static_cast<std::size_t>((c * shape_[1] + h) * shape_[2] + w)];
  }

  // Same values, new shape; throws ArgumentError when element counts differ.
  Tensor reshaped(Shape shape) const;
  void fill(double value);
  bool all_finite() const noexcept;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double factor);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  AlignedDoubles values_;
};

bool same_shape(const Tensor& a, const Tensor& b) noexcept;
double max_abs_diff(const Tensor& a, const Tensor& b);
double dot(const Tensor& a, const Tensor& b);

}  // namespace jras
