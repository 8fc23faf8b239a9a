#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <string_view>

#include "bunet/tensor.hpp"

namespace bunet {

inline constexpr int kClusterCount = 18;

// Scalar definitions. At exactly 0 ReLU has value 0 and derivative 0; ELU has
// value 0 and derivative alpha (the left limit, 1 for alpha = 1).
inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double relu_grad(double x) { return x > 0.0 ? 1.0 : 0.0; }
inline double elu(double x, double alpha) { return x > 0.0 ? x : alpha * std::expm1(x); }
inline double elu_grad(double x, double alpha) { return x > 0.0 ? 1.0 : alpha * std::exp(x); }
/// Clamped to the open interval (0, 1).
inline double sigmoid(double x) {
  const double e = std::exp(-std::abs(x));
  const double y = x >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
  return std::clamp(y, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x);
template <typename T>
TensorT<T> elu(const TensorT<T>& x, double alpha = 1.0);
template <typename T>
TensorT<T> sigmoid(const TensorT<T>& x);

template <typename T>
void relu_forward(std::span<const T> in, std::span<T> out);
template <typename T>
void relu_backward(std::span<const T> in, std::span<const T> grad_out, std::span<T> grad_in);
template <typename T>
void elu_forward(std::span<const T> in, double alpha, std::span<T> out);
template <typename T>
void elu_backward(std::span<const T> in, double alpha, std::span<const T> grad_out, std::span<T> grad_in);
template <typename T>
void sigmoid_forward(std::span<const T> in, std::span<T> out);
/// Uses the forward output: d sigma = sigma (1 - sigma).
template <typename T>
void sigmoid_backward(std::span<const T> out, std::span<const T> grad_out, std::span<T> grad_in);

inline constexpr double kSaturationThreshold = -5.0;

/// Fraction of entries strictly below `threshold`.
template <typename T>
double saturation_stats(std::span<const T> pre_activations, double threshold = kSaturationThreshold);

template <typename T>
double saturation_stats(const TensorT<T>& pre_activations, double threshold = kSaturationThreshold) {
  return saturation_stats(pre_activations.values(), threshold);
}

/// Which of the numbered clusters use ReLU; every other cluster uses ELU.
struct ActivationScheme {
  std::set<int> relu_clusters;
  double alpha = 1.0;

  bool uses_relu(int cluster) const { return relu_clusters.contains(cluster); }
  /// Throws ConfigError for indices outside [1, max_cluster] or alpha <= 0.
  void validate(int max_cluster = kClusterCount) const;

  static ActivationScheme all_elu() { return {}; }
  static ActivationScheme all_relu();
  static ActivationScheme cluster1() { return {{3, 7, 12, 16}, 1.0}; }
  static ActivationScheme cluster2() { return {{5, 9, 10, 14}, 1.0}; }
  static ActivationScheme cluster3() { return {{4, 5, 13, 14}, 1.0}; }

  /// all-elu | all-relu | cluster1 | cluster2 | cluster3
  static ActivationScheme preset(std::string_view name);
  /// Comma-separated cluster indices, e.g. "4,5,13,14". Empty string = all ELU.
  static ActivationScheme from_list(std::string_view list);
  /// Comma-separated form of relu_clusters.
  std::string to_list() const;

  friend bool operator==(const ActivationScheme&, const ActivationScheme&) = default;
};

}  // namespace bunet
