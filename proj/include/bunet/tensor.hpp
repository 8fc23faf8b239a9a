#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bunet/errors.hpp"

namespace bunet {

/// Rank-4 NCHW shape.
struct Shape {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  constexpr std::size_t size() const noexcept { return n * c * h * w; }
  constexpr std::size_t plane() const noexcept { return h * w; }
  constexpr std::size_t sample() const noexcept { return c * h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
  std::string str() const;
};

/// Dense NCHW tensor with an optional gradient buffer of the same length.
template <typename T>
class TensorT {
 public:
  using value_type = T;

  TensorT() = default;
  explicit TensorT(Shape shape, T fill = T(0));
  TensorT(Shape shape, std::vector<T> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }
  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  std::vector<T>& storage() noexcept { return values_; }
  const std::vector<T>& storage() const noexcept { return values_; }

  T& operator[](std::size_t i) noexcept { return values_[i]; }
  T operator[](std::size_t i) const noexcept { return values_[i]; }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return values_[offset(n, c, h, w)];
  }
  T at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return values_[offset(n, c, h, w)];
  }

  bool has_grad() const noexcept { return !grad_.empty(); }
  /// Allocates a zeroed gradient buffer if absent.
  std::span<T> ensure_grad();
  std::span<T> grad() noexcept { return grad_; }
  std::span<const T> grad() const noexcept { return grad_; }
  void zero_grad();
  void drop_grad() noexcept { grad_.clear(); grad_.shrink_to_fit(); }

  void fill(T v);
  /// Reinterprets the layout; element count must be unchanged.
  void reshape(Shape s);

  bool all_finite() const noexcept;

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<T> values_;
  std::vector<T> grad_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <typename To, typename From>
TensorT<To> tensor_cast(const TensorT<From>& src) {
  std::vector<To> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = static_cast<To>(src[i]);
  return TensorT<To>(src.shape(), std::move(out));
}

extern template class TensorT<float>;
extern template class TensorT<double>;

}  // namespace bunet
