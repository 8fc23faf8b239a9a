#include "bunet/activations.hpp"

#include <charconv>

#include "bunet/errors.hpp"
#include "bunet/parallel.hpp"

namespace bunet {

template <typename T>
void relu_forward(std::span<const T> in, std::span<T> out) {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

template <typename T>
void relu_backward(std::span<const T> in, std::span<const T> grad_out, std::span<T> grad_in) {
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] > T(0)) grad_in[i] += grad_out[i];
  }
}

template <typename T>
void elu_forward(std::span<const T> in, double alpha, std::span<T> out) {
  const std::size_t n = in.size();
#pragma omp parallel for schedule(static) num_threads(num_threads()) if (n > 65536)
  for (std::size_t i = 0; i < n; ++i) {
    const T x = in[i];
    out[i] = x > T(0) ? x : static_cast<T>(alpha * std::expm1(x));
  }
}

template <typename T>
void elu_backward(std::span<const T> in, double alpha, std::span<const T> grad_out, std::span<T> grad_in) {
  const std::size_t n = in.size();
#pragma omp parallel for schedule(static) num_threads(num_threads()) if (n > 65536)
  for (std::size_t i = 0; i < n; ++i) {
    const T x = in[i];
    grad_in[i] += x > T(0) ? grad_out[i] : static_cast<T>(grad_out[i] * alpha * std::exp(x));
  }
}

template <typename T>
void sigmoid_forward(std::span<const T> in, std::span<T> out) {
  // Kept strictly inside (0, 1) even where the exact value rounds to 0 or 1.
  constexpr T lo = std::numeric_limits<T>::min();
  const T hi = std::nextafter(T(1), T(0));
  for (std::size_t i = 0; i < in.size(); ++i) {
    const T x = in[i];
    T y;
    if (x >= T(0)) {
      y = T(1) / (T(1) + std::exp(-x));
    } else {
      const T e = std::exp(x);
      y = e / (T(1) + e);
    }
    out[i] = std::clamp(y, lo, hi);
  }
}

template <typename T>
void sigmoid_backward(std::span<const T> out, std::span<const T> grad_out, std::span<T> grad_in) {
  for (std::size_t i = 0; i < out.size(); ++i) grad_in[i] += grad_out[i] * out[i] * (T(1) - out[i]);
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
  TensorT<T> y(x.shape());
  relu_forward<T>(x.values(), y.values());
  return y;
}

template <typename T>
TensorT<T> elu(const TensorT<T>& x, double alpha) {
  TensorT<T> y(x.shape());
  elu_forward<T>(x.values(), alpha, y.values());
  return y;
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& x) {
  TensorT<T> y(x.shape());
  sigmoid_forward<T>(x.values(), y.values());
  return y;
}

template <typename T>
double saturation_stats(std::span<const T> pre_activations, double threshold) {
  if (pre_activations.empty()) return 0.0;
  std::size_t below = 0;
  for (T v : pre_activations) below += static_cast<double>(v) < threshold ? 1 : 0;
  return static_cast<double>(below) / static_cast<double>(pre_activations.size());
}

#define BUNET_INSTANTIATE_ACT(T)                                                                   \
  template void relu_forward<T>(std::span<const T>, std::span<T>);                                 \
  template void relu_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);            \
  template void elu_forward<T>(std::span<const T>, double, std::span<T>);                          \
  template void elu_backward<T>(std::span<const T>, double, std::span<const T>, std::span<T>);     \
  template void sigmoid_forward<T>(std::span<const T>, std::span<T>);                              \
  template void sigmoid_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);         \
  template TensorT<T> relu<T>(const TensorT<T>&);                                                  \
  template TensorT<T> elu<T>(const TensorT<T>&, double);                                           \
  template TensorT<T> sigmoid<T>(const TensorT<T>&);                                               \
  template double saturation_stats<T>(std::span<const T>, double);

BUNET_INSTANTIATE_ACT(float)
BUNET_INSTANTIATE_ACT(double)
#undef BUNET_INSTANTIATE_ACT

void ActivationScheme::validate(int max_cluster) const {
  if (!(alpha > 0.0)) throw ConfigError("ELU alpha must be positive");
  for (int c : relu_clusters) {
    if (c < 1 || c > max_cluster) {
      throw ConfigError("ReLU cluster index " + std::to_string(c) + " outside [1, " +
                        std::to_string(max_cluster) + "]");
    }
  }
}

ActivationScheme ActivationScheme::all_relu() {
  ActivationScheme s;
  for (int c = 1; c <= kClusterCount; ++c) s.relu_clusters.insert(c);
  return s;
}

ActivationScheme ActivationScheme::preset(std::string_view name) {
  if (name == "all-elu") return all_elu();
  if (name == "all-relu") return all_relu();
  if (name == "cluster1") return cluster1();
  if (name == "cluster2") return cluster2();
  if (name == "cluster3") return cluster3();
  throw ConfigError("unknown activation preset '" + std::string(name) +
                    "' (expected all-elu, all-relu, cluster1, cluster2 or cluster3)");
}

ActivationScheme ActivationScheme::from_list(std::string_view list) {
  ActivationScheme s;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    const std::size_t comma = std::min(list.find(',', pos), list.size());
    std::string_view item = list.substr(pos, comma - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) {
      int value = 0;
      const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
      if (ec != std::errc() || ptr != item.data() + item.size()) {
        throw ConfigError("invalid cluster index '" + std::string(item) + "'");
      }
      s.relu_clusters.insert(value);
    } else if (comma != list.size() || pos != 0) {
      throw ConfigError("empty entry in cluster list '" + std::string(list) + "'");
    }
    pos = comma + 1;
  }
  return s;
}

std::string ActivationScheme::to_list() const {
  std::string out;
  for (int c : relu_clusters) {
    if (!out.empty()) out += ',';
    out += std::to_string(c);
  }
  return out;
}

}  // namespace bunet
