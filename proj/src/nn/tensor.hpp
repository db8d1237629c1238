#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "../error.hpp"

namespace shaftpose::nn {

// Fixed 64-byte alignment keeps Eigen's vectorized reductions on the same summation order
// regardless of where the heap places a buffer, so results are reproducible run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

// NHWC extent. Lower-rank tensors leave trailing dimensions at 1 (e.g. a vector is {1,1,1,C}).
struct Shape {
  int n = 1;
  int h = 1;
  int w = 1;
  int c = 1;

  std::size_t size() const { return static_cast<std::size_t>(n) * h * w * c; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(h) + "," + std::to_string(w) + "," + std::to_string(c) + ")";
  }
};

// Dense array with a gradient buffer of identical shape. Backward passes accumulate into grad.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) { resize(shape, fill); }

  void resize(Shape shape, T fill = T(0)) {
    shape_ = shape;
    value_.assign(shape.size(), fill);
    grad_.assign(shape.size(), T(0));
  }
  // Resize without clearing values when the size is unchanged.
  void reshape(Shape shape) {
    if (shape.size() != value_.size()) {
      resize(shape);
    } else {
      shape_ = shape;
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return value_.size(); }

  std::span<T> values() { return value_; }
  std::span<const T> values() const { return value_; }
  std::span<T> grads() { return grad_; }
  std::span<const T> grads() const { return grad_; }
  T* data() { return value_.data(); }
  const T* data() const { return value_.data(); }
  T* grad() { return grad_.data(); }
  const T* grad() const { return grad_.data(); }

  T& operator[](std::size_t i) { return value_[i]; }
  T operator[](std::size_t i) const { return value_[i]; }
  T& at(int n, int y, int x, int c) { return value_[index(n, y, x, c)]; }
  T at(int n, int y, int x, int c) const { return value_[index(n, y, x, c)]; }
  std::size_t index(int n, int y, int x, int c) const {
    return ((static_cast<std::size_t>(n) * shape_.h + y) * shape_.w + x) * shape_.c + c;
  }

  void zero_grad() { std::fill(grad_.begin(), grad_.end(), T(0)); }

 private:
  Shape shape_;
  Buffer<T> value_;
  Buffer<T> grad_;
};

template <typename T>
void check_finite(std::span<const T> v, const char* op) {
  for (const T x : v) {
    if (!std::isfinite(x)) fail(ErrorCode::kNumeric, std::string("non-finite value produced by ") + op);
  }
}

}  // namespace shaftpose::nn
