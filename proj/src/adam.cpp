#include "bunet/adam.hpp"

#include <cmath>

#include "bunet/errors.hpp"

namespace bunet {

template <typename T>
void adam_step(std::span<const ParamRef<T>> params, AdamState& state) {
  if (state.first_moment.empty()) {
    state.first_moment.resize(params.size());
    state.second_moment.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first_moment[i].assign(params[i].value.size(), 0.0);
      state.second_moment[i].assign(params[i].value.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ConfigError("Adam state tracks " + std::to_string(state.first_moment.size()) +
                      " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.grad.size() != p.value.size() || state.first_moment[i].size() != p.value.size()) {
      throw ConfigError("Adam: size mismatch for parameter " + p.name);
    }
    for (T g : p.grad) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericalError("non-finite gradient in parameter " + p.name);
      }
    }
  }

  state.step_count += 1;
  const AdamHyper& h = state.hyper;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(h.beta1, t);
  const double correction2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto& p = params[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g;
      v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g * g;
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      p.value[k] = static_cast<T>(p.value[k] - h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon));
    }
  }
}

template <typename T>
std::vector<ParamRef<T>> trainable_refs(ModelGraph<T>& graph) {
  std::vector<ParamRef<T>> refs;
  for (auto& p : graph.parameters()) {
    if (!p.trainable()) continue;
    p.value.ensure_grad();
    refs.push_back({p.name, p.value.values(), p.value.grad()});
  }
  return refs;
}

template void adam_step<float>(std::span<const ParamRef<float>>, AdamState&);
template void adam_step<double>(std::span<const ParamRef<double>>, AdamState&);
template std::vector<ParamRef<float>> trainable_refs<float>(ModelGraph<float>&);
template std::vector<ParamRef<double>> trainable_refs<double>(ModelGraph<double>&);

}  // namespace bunet
