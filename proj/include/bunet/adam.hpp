#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bunet/graph.hpp"

namespace bunet {

struct AdamHyper {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment estimates for a list of parameter arrays.
struct AdamState {
  AdamHyper hyper;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step_count = 0;
};

/// View of one trainable array and its gradient.
template <typename T>
struct ParamRef {
  std::string name;
  std::span<T> value;
  std::span<const T> grad;
};

/// One bias-corrected Adam update. Throws NumericalError naming the first
/// parameter whose gradient is non-finite; parameters are untouched then.
template <typename T>
void adam_step(std::span<const ParamRef<T>> params, AdamState& state);

/// Collects the trainable parameters of a graph (after backward()).
template <typename T>
std::vector<ParamRef<T>> trainable_refs(ModelGraph<T>& graph);

}  // namespace bunet
