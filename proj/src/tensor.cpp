#include "bunet/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace bunet {

std::string Shape::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
         std::to_string(w) + ")";
}

template <typename T>
TensorT<T>::TensorT(Shape shape, T fill) : shape_(shape), values_(shape.size(), fill) {}

template <typename T>
TensorT<T>::TensorT(Shape shape, std::vector<T> values) : shape_(shape), values_(std::move(values)) {
  if (values_.size() != shape_.size()) {
    throw ShapeError("tensor of shape " + shape_.str() + " needs " + std::to_string(shape_.size()) +
                     " values, got " + std::to_string(values_.size()));
  }
}

template <typename T>
std::span<T> TensorT<T>::ensure_grad() {
  if (grad_.size() != values_.size()) grad_.assign(values_.size(), T(0));
  return grad_;
}

template <typename T>
void TensorT<T>::zero_grad() {
  std::fill(grad_.begin(), grad_.end(), T(0));
}

template <typename T>
void TensorT<T>::fill(T v) {
  std::fill(values_.begin(), values_.end(), v);
}

template <typename T>
void TensorT<T>::reshape(Shape s) {
  if (s.size() != values_.size()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + s.str());
  }
  shape_ = s;
}

template <typename T>
bool TensorT<T>::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](T v) { return std::isfinite(v); });
}

template class TensorT<float>;
template class TensorT<double>;

}  // namespace bunet
