#include "bunet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "bunet/parallel.hpp"

namespace bunet::ops {
namespace {

template <typename T>
void im2col(const T* in, std::size_t channels, std::size_t h, std::size_t w, const Conv2dGeometry& g,
            std::size_t out_h, std::size_t out_w, T* col) {
  const std::size_t plane = out_h * out_w;
  const std::size_t rows = channels * g.kernel_h * g.kernel_w;
#pragma omp parallel for schedule(static) num_threads(num_threads()) if (rows > 16)
  for (std::size_t row = 0; row < rows; ++row) {
    const std::size_t kj = row % g.kernel_w;
    const std::size_t ki = (row / g.kernel_w) % g.kernel_h;
    const std::size_t c = row / (g.kernel_w * g.kernel_h);
    const T* src = in + c * h * w;
    T* dst = col + row * plane;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                static_cast<std::ptrdiff_t>(g.pad_top);
      T* drow = dst + oy * out_w;
      if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
        std::fill(drow, drow + out_w, T(0));
        continue;
      }
      const T* srow = src + static_cast<std::size_t>(iy) * w;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                  static_cast<std::ptrdiff_t>(g.pad_left);
        drow[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? T(0) : srow[ix];
      }
    }
  }
}

// Accumulates columns back into the image; each input channel is owned by
// exactly one thread, so the summation order is fixed.
template <typename T>
void col2im(const T* col, std::size_t channels, std::size_t h, std::size_t w, const Conv2dGeometry& g,
            std::size_t out_h, std::size_t out_w, T* in) {
  const std::size_t plane = out_h * out_w;
#pragma omp parallel for schedule(static) num_threads(num_threads()) if (channels > 1)
  for (std::size_t c = 0; c < channels; ++c) {
    T* dst = in + c * h * w;
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        const T* src = col + ((c * g.kernel_h + ki) * g.kernel_w + kj) * plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad_top);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          T* drow = dst + static_cast<std::size_t>(iy) * w;
          const T* srow = src + oy * out_w;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                      static_cast<std::ptrdiff_t>(g.pad_left);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const Conv2dGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.pad_top == 0 && g.pad_left == 0 &&
         g.pad_bottom == 0 && g.pad_right == 0;
}

}  // namespace

Shape conv2d_output_shape(const Shape& in, std::size_t out_channels, const Conv2dGeometry& g) {
  if (g.stride == 0 || g.kernel_h == 0 || g.kernel_w == 0) {
    throw ShapeError("conv2d: kernel and stride must be positive");
  }
  const std::size_t ph = in.h + g.pad_top + g.pad_bottom;
  const std::size_t pw = in.w + g.pad_left + g.pad_right;
  if (ph < g.kernel_h || pw < g.kernel_w) {
    throw ShapeError("conv2d: kernel " + std::to_string(g.kernel_h) + "x" + std::to_string(g.kernel_w) +
                     " larger than padded input " + std::to_string(ph) + "x" + std::to_string(pw));
  }
  if (out_channels == 0) throw ShapeError("conv2d: zero output channels");
  return {in.n, out_channels, (ph - g.kernel_h) / g.stride + 1, (pw - g.kernel_w) / g.stride + 1};
}

template <typename T>
void conv2d_forward(const TensorT<T>& in, const TensorT<T>& kernel, std::span<const T> bias,
                    const Conv2dGeometry& g, TensorT<T>& out, std::vector<T>& scratch) {
  const Shape& is = in.shape();
  const Shape& ks = kernel.shape();
  if (ks.c != is.c || ks.h != g.kernel_h || ks.w != g.kernel_w) {
    throw ShapeError("conv2d: kernel " + ks.str() + " incompatible with input " + is.str());
  }
  if (!bias.empty() && bias.size() != ks.n) throw ShapeError("conv2d: bias length mismatch");
  const Shape os = conv2d_output_shape(is, ks.n, g);
  if (out.shape() != os) out = TensorT<T>(os);

  const std::size_t k_cols = is.c * g.kernel_h * g.kernel_w;
  const std::size_t plane = os.h * os.w;
  const bool pointwise = is_pointwise(g);
  if (!pointwise) scratch.resize(k_cols * plane);

  for (std::size_t n = 0; n < is.n; ++n) {
    const T* src = in.data() + n * is.sample();
    const T* col = src;
    if (!pointwise) {
      im2col(src, is.c, is.h, is.w, g, os.h, os.w, scratch.data());
      col = scratch.data();
    }
    T* dst = out.data() + n * os.sample();
    blas::gemm(false, false, os.c, plane, k_cols, T(1), kernel.data(), k_cols, col, plane, T(0), dst,
               plane);
    if (!bias.empty()) {
      for (std::size_t oc = 0; oc < os.c; ++oc) {
        T* p = dst + oc * plane;
        const T b = bias[oc];
        for (std::size_t i = 0; i < plane; ++i) p[i] += b;
      }
    }
  }
}

template <typename T>
void conv2d_backward(const TensorT<T>& in, const TensorT<T>& kernel, const Conv2dGeometry& g,
                     std::span<const T> grad_out, std::span<T> grad_in, std::span<T> grad_kernel,
                     std::span<T> grad_bias, std::vector<T>& scratch) {
  const Shape& is = in.shape();
  const Shape& ks = kernel.shape();
  const Shape os = conv2d_output_shape(is, ks.n, g);
  const std::size_t k_cols = is.c * g.kernel_h * g.kernel_w;
  const std::size_t plane = os.h * os.w;
  const bool pointwise = is_pointwise(g);
  // Layout: [im2col buffer | column-gradient buffer]
  scratch.resize(pointwise ? 0 : 2 * k_cols * plane);
  T* col_buf = scratch.data();
  T* dcol_buf = pointwise ? nullptr : scratch.data() + k_cols * plane;

  for (std::size_t n = 0; n < is.n; ++n) {
    const T* src = in.data() + n * is.sample();
    const T* gout = grad_out.data() + n * os.sample();

    if (!grad_bias.empty()) {
      for (std::size_t oc = 0; oc < os.c; ++oc) {
        const T* p = gout + oc * plane;
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
        grad_bias[oc] += static_cast<T>(s);
      }
    }
    if (!grad_kernel.empty()) {
      const T* col = src;
      if (!pointwise) {
        im2col(src, is.c, is.h, is.w, g, os.h, os.w, col_buf);
        col = col_buf;
      }
      blas::gemm(false, true, os.c, k_cols, plane, T(1), gout, plane, col, plane, T(1),
                 grad_kernel.data(), k_cols);
    }
    if (!grad_in.empty()) {
      T* gin = grad_in.data() + n * is.sample();
      if (pointwise) {
        blas::gemm(true, false, k_cols, plane, os.c, T(1), kernel.data(), k_cols, gout, plane, T(1),
                   gin, plane);
      } else {
        blas::gemm(true, false, k_cols, plane, os.c, T(1), kernel.data(), k_cols, gout, plane, T(0),
                   dcol_buf, plane);
        col2im(dcol_buf, is.c, is.h, is.w, g, os.h, os.w, gin);
      }
    }
  }
}

template <typename T>
void max_pool2_forward(const TensorT<T>& in, TensorT<T>& out, std::vector<std::uint32_t>& argmax) {
  const Shape& is = in.shape();
  if (is.h % 2 != 0 || is.w % 2 != 0) {
    throw ShapeError("max_pool2: spatial dims must be even, got " + is.str());
  }
  const Shape os{is.n, is.c, is.h / 2, is.w / 2};
  if (out.shape() != os) out = TensorT<T>(os);
  argmax.resize(os.size());
  const std::size_t planes = is.n * is.c;
#pragma omp parallel for schedule(static) num_threads(num_threads()) if (planes > 1)
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t in_base = p * is.plane();
    const std::size_t out_base = p * os.plane();
    for (std::size_t oy = 0; oy < os.h; ++oy) {
      for (std::size_t ox = 0; ox < os.w; ++ox) {
        std::size_t best = in_base + (2 * oy) * is.w + 2 * ox;
        T best_v = in[best];
        const std::size_t cand[3] = {best + 1, best + is.w, best + is.w + 1};
        for (std::size_t idx : cand) {
          if (in[idx] > best_v) {  // strict: ties keep the first in row-major order
            best_v = in[idx];
            best = idx;
          }
        }
        out[out_base + oy * os.w + ox] = best_v;
        argmax[out_base + oy * os.w + ox] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

template <typename T>
void max_pool2_backward(const std::vector<std::uint32_t>& argmax, std::span<const T> grad_out,
                        std::span<T> grad_in) {
  // Each input element is the argmax of at most one window.
  for (std::size_t i = 0; i < argmax.size(); ++i) grad_in[argmax[i]] += grad_out[i];
}

template <typename T>
void upsample2_forward(const TensorT<T>& in, TensorT<T>& out) {
  const Shape& is = in.shape();
  const Shape os{is.n, is.c, is.h * 2, is.w * 2};
  if (out.shape() != os) out = TensorT<T>(os);
  const std::size_t planes = is.n * is.c;
#pragma omp parallel for schedule(static) num_threads(num_threads()) if (planes > 1)
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = in.data() + p * is.plane();
    T* dst = out.data() + p * os.plane();
    for (std::size_t y = 0; y < os.h; ++y) {
      const T* srow = src + (y / 2) * is.w;
      T* drow = dst + y * os.w;
      for (std::size_t x = 0; x < os.w; ++x) drow[x] = srow[x / 2];
    }
  }
}

template <typename T>
void upsample2_backward(const Shape& in_shape, std::span<const T> grad_out, std::span<T> grad_in) {
  const std::size_t planes = in_shape.n * in_shape.c;
  const std::size_t ow = in_shape.w * 2;
#pragma omp parallel for schedule(static) num_threads(num_threads()) if (planes > 1)
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = grad_out.data() + p * in_shape.plane() * 4;
    T* dst = grad_in.data() + p * in_shape.plane();
    for (std::size_t y = 0; y < in_shape.h; ++y) {
      for (std::size_t x = 0; x < in_shape.w; ++x) {
        const T* q = src + (2 * y) * ow + 2 * x;
        dst[y * in_shape.w + x] += (q[0] + q[1]) + (q[ow] + q[ow + 1]);
      }
    }
  }
}

template <typename T>
void batch_norm_forward(const TensorT<T>& in, std::span<const T> gamma, std::span<const T> beta,
                        double epsilon, BatchNormMode mode, std::span<T> running_mean,
                        std::span<T> running_var, double momentum, TensorT<T>& out,
                        BatchNormCache& cache) {
  const Shape& s = in.shape();
  if (gamma.size() != s.c || beta.size() != s.c) throw ShapeError("batch_norm: parameter length mismatch");
  const std::size_t count = s.n * s.plane();
  if (mode == BatchNormMode::Train && count < 2) {
    throw ShapeError("batch_norm: train mode needs at least 2 values per channel, got " +
                     std::to_string(count));
  }
  if (out.shape() != s) out = TensorT<T>(s);
  cache.mode = mode;
  cache.mean.assign(s.c, 0.0);
  cache.inv_std.assign(s.c, 0.0);

#pragma omp parallel for schedule(static) num_threads(num_threads()) if (s.c > 1)
  for (std::size_t c = 0; c < s.c; ++c) {
    double mean = 0.0;
    double var = 0.0;
    if (mode == BatchNormMode::Train) {
      double sum = 0.0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = in.data() + (n * s.c + c) * s.plane();
        for (std::size_t i = 0; i < s.plane(); ++i) sum += p[i];
      }
      mean = sum / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = in.data() + (n * s.c + c) * s.plane();
        for (std::size_t i = 0; i < s.plane(); ++i) {
          const double d = p[i] - mean;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(count);
      if (!running_mean.empty()) {
        running_mean[c] = static_cast<T>(momentum * running_mean[c] + (1.0 - momentum) * mean);
        running_var[c] = static_cast<T>(momentum * running_var[c] +
                                        (1.0 - momentum) * sq / static_cast<double>(count - 1));
      }
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + epsilon);
    cache.mean[c] = mean;
    cache.inv_std[c] = inv_std;
    const double scale = gamma[c] * inv_std;
    const double shift = beta[c] - mean * scale;
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* p = in.data() + (n * s.c + c) * s.plane();
      T* q = out.data() + (n * s.c + c) * s.plane();
      for (std::size_t i = 0; i < s.plane(); ++i) q[i] = static_cast<T>(p[i] * scale + shift);
    }
  }
}

template <typename T>
void batch_norm_backward(const TensorT<T>& in, std::span<const T> gamma, const BatchNormCache& cache,
                         std::span<const T> grad_out, std::span<T> grad_in, std::span<T> grad_gamma,
                         std::span<T> grad_beta) {
  const Shape& s = in.shape();
  const double count = static_cast<double>(s.n * s.plane());
#pragma omp parallel for schedule(static) num_threads(num_threads()) if (s.c > 1)
  for (std::size_t c = 0; c < s.c; ++c) {
    const double mean = cache.mean[c];
    const double inv_std = cache.inv_std[c];
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t base = (n * s.c + c) * s.plane();
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const double g = grad_out[base + i];
        sum_g += g;
        sum_gx += g * (in[base + i] - mean) * inv_std;
      }
    }
    if (!grad_gamma.empty()) grad_gamma[c] += static_cast<T>(sum_gx);
    if (!grad_beta.empty()) grad_beta[c] += static_cast<T>(sum_g);
    if (grad_in.empty()) continue;
    const double scale = gamma[c] * inv_std;
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t base = (n * s.c + c) * s.plane();
      for (std::size_t i = 0; i < s.plane(); ++i) {
        if (cache.mode == BatchNormMode::Train) {
          const double xhat = (in[base + i] - mean) * inv_std;
          grad_in[base + i] += static_cast<T>(
              scale * (grad_out[base + i] - sum_g / count - xhat * sum_gx / count));
        } else {
          grad_in[base + i] += static_cast<T>(scale * grad_out[base + i]);
        }
      }
    }
  }
}

template <typename T>
void concat_forward(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& out) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: " + sa.str() + " and " + sb.str() + " differ outside channels");
  }
  const Shape os{sa.n, sa.c + sb.c, sa.h, sa.w};
  if (out.shape() != os) out = TensorT<T>(os);
  for (std::size_t n = 0; n < sa.n; ++n) {
    T* dst = out.data() + n * os.sample();
    std::copy_n(a.data() + n * sa.sample(), sa.sample(), dst);
    std::copy_n(b.data() + n * sb.sample(), sb.sample(), dst + sa.sample());
  }
}

template <typename T>
void concat_backward(const Shape& a_shape, const Shape& b_shape, std::span<const T> grad_out,
                     std::span<T> grad_a, std::span<T> grad_b) {
  const std::size_t os = a_shape.sample() + b_shape.sample();
  for (std::size_t n = 0; n < a_shape.n; ++n) {
    const T* src = grad_out.data() + n * os;
    if (!grad_a.empty()) {
      T* dst = grad_a.data() + n * a_shape.sample();
      for (std::size_t i = 0; i < a_shape.sample(); ++i) dst[i] += src[i];
    }
    if (!grad_b.empty()) {
      T* dst = grad_b.data() + n * b_shape.sample();
      for (std::size_t i = 0; i < b_shape.sample(); ++i) dst[i] += src[a_shape.sample() + i];
    }
  }
}

template <typename T>
void add_forward(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& out) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  if (out.shape() != a.shape()) out = TensorT<T>(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
}

template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& kernel, std::span<const T> bias,
                  std::size_t stride, std::size_t padding) {
  const Conv2dGeometry g{kernel.shape().h, kernel.shape().w, stride, padding, padding, padding, padding};
  TensorT<T> out;
  std::vector<T> scratch;
  conv2d_forward(input, kernel, bias, g, out, scratch);
  return out;
}

template <typename T>
TensorT<T> max_pool2(const TensorT<T>& input) {
  TensorT<T> out;
  std::vector<std::uint32_t> argmax;
  max_pool2_forward(input, out, argmax);
  return out;
}

template <typename T>
TensorT<T> up_conv2(const TensorT<T>& input, const TensorT<T>& kernel, std::span<const T> bias) {
  TensorT<T> up;
  upsample2_forward(input, up);
  TensorT<T> out;
  std::vector<T> scratch;
  conv2d_forward(up, kernel, bias, Conv2dGeometry::same(2), out, scratch);
  return out;
}

template <typename T>
TensorT<T> batch_norm(const TensorT<T>& input, std::span<const T> gamma, std::span<const T> beta,
                      double epsilon, BatchNormMode mode, std::span<T> running_mean,
                      std::span<T> running_var, double momentum) {
  TensorT<T> out;
  BatchNormCache cache;
  batch_norm_forward(input, gamma, beta, epsilon, mode, running_mean, running_var, momentum, out, cache);
  return out;
}

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  TensorT<T> out;
  concat_forward(a, b, out);
  return out;
}

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  TensorT<T> out;
  add_forward(a, b, out);
  return out;
}

#define BUNET_INSTANTIATE_OPS(T)                                                                      \
  template void conv2d_forward<T>(const TensorT<T>&, const TensorT<T>&, std::span<const T>,           \
                                  const Conv2dGeometry&, TensorT<T>&, std::vector<T>&);               \
  template void conv2d_backward<T>(const TensorT<T>&, const TensorT<T>&, const Conv2dGeometry&,       \
                                   std::span<const T>, std::span<T>, std::span<T>, std::span<T>,      \
                                   std::vector<T>&);                                                  \
  template void max_pool2_forward<T>(const TensorT<T>&, TensorT<T>&, std::vector<std::uint32_t>&);    \
  template void max_pool2_backward<T>(const std::vector<std::uint32_t>&, std::span<const T>,          \
                                      std::span<T>);                                                  \
  template void upsample2_forward<T>(const TensorT<T>&, TensorT<T>&);                                 \
  template void upsample2_backward<T>(const Shape&, std::span<const T>, std::span<T>);                \
  template void batch_norm_forward<T>(const TensorT<T>&, std::span<const T>, std::span<const T>,      \
                                      double, BatchNormMode, std::span<T>, std::span<T>, double,      \
                                      TensorT<T>&, BatchNormCache&);                                  \
  template void batch_norm_backward<T>(const TensorT<T>&, std::span<const T>, const BatchNormCache&,  \
                                       std::span<const T>, std::span<T>, std::span<T>, std::span<T>); \
  template void concat_forward<T>(const TensorT<T>&, const TensorT<T>&, TensorT<T>&);                 \
  template void concat_backward<T>(const Shape&, const Shape&, std::span<const T>, std::span<T>,      \
                                   std::span<T>);                                                     \
  template void add_forward<T>(const TensorT<T>&, const TensorT<T>&, TensorT<T>&);                    \
  template TensorT<T> conv2d<T>(const TensorT<T>&, const TensorT<T>&, std::span<const T>,             \
                                std::size_t, std::size_t);                                            \
  template TensorT<T> max_pool2<T>(const TensorT<T>&);                                                \
  template TensorT<T> up_conv2<T>(const TensorT<T>&, const TensorT<T>&, std::span<const T>);          \
  template TensorT<T> batch_norm<T>(const TensorT<T>&, std::span<const T>, std::span<const T>,        \
                                    double, BatchNormMode, std::span<T>, std::span<T>, double);       \
  template TensorT<T> concat_channels<T>(const TensorT<T>&, const TensorT<T>&);                       \
  template TensorT<T> add<T>(const TensorT<T>&, const TensorT<T>&);

BUNET_INSTANTIATE_OPS(float)
BUNET_INSTANTIATE_OPS(double)

#undef BUNET_INSTANTIATE_OPS

}  // namespace bunet::ops
