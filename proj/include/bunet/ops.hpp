#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bunet/tensor.hpp"

// Forward/backward kernels for the layer types used by the U-net builders.
// Backward kernels accumulate (+=) into the gradient spans they receive; an
// empty span means "not requested".
namespace bunet::ops {

struct Conv2dGeometry {
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t pad_top = 1;
  std::size_t pad_left = 1;
  std::size_t pad_bottom = 1;
  std::size_t pad_right = 1;

  /// Symmetric padding on all sides.
  static Conv2dGeometry padded(std::size_t kernel, std::size_t stride, std::size_t pad) {
    return {kernel, kernel, stride, pad, pad, pad, pad};
  }
  /// Stride-1 geometry whose output has the input's spatial size. Even
  /// kernels put the extra padding row/column at the bottom/right.
  static Conv2dGeometry same(std::size_t kernel) {
    const std::size_t total = kernel - 1;
    return {kernel, kernel, 1, total / 2, total / 2, total - total / 2, total - total / 2};
  }
};

/// Throws ShapeError when the geometry yields a non-positive output.
Shape conv2d_output_shape(const Shape& in, std::size_t out_channels, const Conv2dGeometry& g);

template <typename T>
void conv2d_forward(const TensorT<T>& in, const TensorT<T>& kernel, std::span<const T> bias,
                    const Conv2dGeometry& g, TensorT<T>& out, std::vector<T>& scratch);

template <typename T>
void conv2d_backward(const TensorT<T>& in, const TensorT<T>& kernel, const Conv2dGeometry& g,
                     std::span<const T> grad_out, std::span<T> grad_in, std::span<T> grad_kernel,
                     std::span<T> grad_bias, std::vector<T>& scratch);

/// 2x2 stride-2 max pooling. `argmax` receives, per output element, the
/// flat input index of the first maximal element in row-major window order.
template <typename T>
void max_pool2_forward(const TensorT<T>& in, TensorT<T>& out, std::vector<std::uint32_t>& argmax);

template <typename T>
void max_pool2_backward(const std::vector<std::uint32_t>& argmax, std::span<const T> grad_out,
                        std::span<T> grad_in);

/// Nearest-neighbour 2x upsampling.
template <typename T>
void upsample2_forward(const TensorT<T>& in, TensorT<T>& out);

template <typename T>
void upsample2_backward(const Shape& in_shape, std::span<const T> grad_out, std::span<T> grad_in);

enum class BatchNormMode { Train, Eval };

struct BatchNormCache {
  BatchNormMode mode = BatchNormMode::Train;
  std::vector<double> mean;
  std::vector<double> inv_std;
};

/// Per-channel normalization over (N, H, W). In train mode batch statistics
/// are used and the running estimates updated as
/// running = momentum * running + (1 - momentum) * batch (unbiased variance).
template <typename T>
void batch_norm_forward(const TensorT<T>& in, std::span<const T> gamma, std::span<const T> beta,
                        double epsilon, BatchNormMode mode, std::span<T> running_mean,
                        std::span<T> running_var, double momentum, TensorT<T>& out,
                        BatchNormCache& cache);

template <typename T>
void batch_norm_backward(const TensorT<T>& in, std::span<const T> gamma, const BatchNormCache& cache,
                         std::span<const T> grad_out, std::span<T> grad_in, std::span<T> grad_gamma,
                         std::span<T> grad_beta);

template <typename T>
void concat_forward(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& out);

template <typename T>
void concat_backward(const Shape& a_shape, const Shape& b_shape, std::span<const T> grad_out,
                     std::span<T> grad_a, std::span<T> grad_b);

template <typename T>
void add_forward(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& out);

// ---------------------------------------------------------------------------
// Value-returning convenience forms.

template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& kernel, std::span<const T> bias,
                  std::size_t stride, std::size_t padding);

template <typename T>
TensorT<T> max_pool2(const TensorT<T>& input);

/// Nearest 2x upsampling followed by a 2x2 convolution padded so that the
/// output is exactly (N, kernel.n, 2H, 2W).
template <typename T>
TensorT<T> up_conv2(const TensorT<T>& input, const TensorT<T>& kernel, std::span<const T> bias);

template <typename T>
TensorT<T> batch_norm(const TensorT<T>& input, std::span<const T> gamma, std::span<const T> beta,
                      double epsilon, BatchNormMode mode, std::span<T> running_mean,
                      std::span<T> running_var, double momentum = 0.9);

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b);

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);

}  // namespace bunet::ops
