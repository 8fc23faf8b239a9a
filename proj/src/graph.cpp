#include "bunet/graph.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "bunet/activations.hpp"

namespace bunet {

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::Input: return "input";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::BatchNorm: return "batch_norm";
    case OpKind::Relu: return "relu";
    case OpKind::Elu: return "elu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::MaxPool2: return "max_pool2";
    case OpKind::Upsample2: return "upsample2";
    case OpKind::Concat: return "concat";
    case OpKind::Add: return "add";
  }
  return "?";
}

std::string_view to_string(NodeRole role) {
  switch (role) {
    case NodeRole::Plain: return "plain";
    case NodeRole::ClusterConv: return "cluster_conv";
    case NodeRole::UpConv: return "up_conv";
    case NodeRole::Head: return "head";
    case NodeRole::Stack: return "stack";
    case NodeRole::Bridge: return "bridge";
    case NodeRole::Skip: return "skip";
  }
  return "?";
}

std::string FeatureShape::str() const {
  return "(" + std::to_string(c) + ", " + std::to_string(h) + ", " + std::to_string(w) + ")";
}

template <typename T>
ModelGraph<T>::ModelGraph(FeatureShape input_shape) {
  if (input_shape.c == 0 || input_shape.h == 0 || input_shape.w == 0) {
    throw ShapeError("graph input shape must be positive, got " + input_shape.str());
  }
  GraphNode in;
  in.kind = OpKind::Input;
  in.name = "input";
  in.shape = input_shape;
  nodes_.push_back(std::move(in));
}

template <typename T>
const GraphNode& ModelGraph<T>::checked(std::size_t i) const {
  if (i >= nodes_.size()) throw ShapeError("node index " + std::to_string(i) + " does not exist");
  return nodes_[i];
}

template <typename T>
FeatureShape ModelGraph<T>::infer(const GraphNode& node) const {
  auto in_shape = [&](std::size_t k) { return checked(node.inputs.at(k)).shape; };
  switch (node.kind) {
    case OpKind::Input:
      return node.shape;
    case OpKind::Conv2d: {
      const FeatureShape x = in_shape(0);
      const Parameter<T>& kernel = params_.at(node.params.at(0));
      if (kernel.value.shape().c != x.c) {
        throw ShapeError(node.name + ": kernel expects " + std::to_string(kernel.value.shape().c) +
                         " input channels, input has " + std::to_string(x.c));
      }
      const Shape o = ops::conv2d_output_shape(x.with_batch(1), kernel.value.shape().n, node.conv);
      return {o.c, o.h, o.w};
    }
    case OpKind::BatchNorm: {
      const FeatureShape x = in_shape(0);
      if (params_.at(node.params.at(0)).value.size() != x.c) {
        throw ShapeError(node.name + ": batch-norm width does not match input channels");
      }
      return x;
    }
    case OpKind::Relu:
    case OpKind::Elu:
    case OpKind::Sigmoid:
      return in_shape(0);
    case OpKind::MaxPool2: {
      const FeatureShape x = in_shape(0);
      if (x.h % 2 != 0 || x.w % 2 != 0) {
        throw ShapeError(node.name + ": max_pool2 needs even spatial dims, got " + x.str());
      }
      return {x.c, x.h / 2, x.w / 2};
    }
    case OpKind::Upsample2: {
      const FeatureShape x = in_shape(0);
      return {x.c, x.h * 2, x.w * 2};
    }
    case OpKind::Concat: {
      const FeatureShape a = in_shape(0);
      const FeatureShape b = in_shape(1);
      if (a.h != b.h || a.w != b.w) {
        throw ShapeError(node.name + ": concat spatial mismatch " + a.str() + " vs " + b.str());
      }
      return {a.c + b.c, a.h, a.w};
    }
    case OpKind::Add: {
      const FeatureShape a = in_shape(0);
      const FeatureShape b = in_shape(1);
      if (!(a == b)) {
        throw ShapeError(node.name + ": add-fusion needs equal shapes, got " + a.str() + " and " + b.str());
      }
      return a;
    }
  }
  throw ShapeError("unknown op");
}

template <typename T>
std::size_t ModelGraph<T>::push(GraphNode node) {
  for (std::size_t i : node.inputs) checked(i);
  node.shape = infer(node);
  nodes_.push_back(std::move(node));
  forward_done_ = false;
  return nodes_.size() - 1;
}

template <typename T>
std::size_t ModelGraph<T>::add_param(const std::string& name, ParamKind kind, Shape shape,
                                     std::size_t fan_in) {
  params_.push_back({name, kind, TensorT<T>(shape), fan_in});
  return params_.size() - 1;
}

template <typename T>
std::size_t ModelGraph<T>::conv2d(std::size_t x, std::size_t out_channels,
                                  const ops::Conv2dGeometry& geometry, const std::string& name, bool bias) {
  const FeatureShape in = checked(x).shape;
  if (out_channels == 0) throw ShapeError(name + ": zero output channels");
  // Validate geometry before allocating parameters.
  ops::conv2d_output_shape(in.with_batch(1), out_channels, geometry);
  GraphNode node;
  node.kind = OpKind::Conv2d;
  node.name = name;
  node.inputs = {x};
  node.conv = geometry;
  const std::size_t fan_in = in.c * geometry.kernel_h * geometry.kernel_w;
  node.params.push_back(
      add_param(name + ".weight", ParamKind::Kernel, {out_channels, in.c, geometry.kernel_h, geometry.kernel_w},
                fan_in));
  if (bias) node.params.push_back(add_param(name + ".bias", ParamKind::Bias, {1, out_channels, 1, 1}, fan_in));
  return push(std::move(node));
}

template <typename T>
std::size_t ModelGraph<T>::batch_norm(std::size_t x, const std::string& name, double epsilon, double momentum) {
  const FeatureShape in = checked(x).shape;
  GraphNode node;
  node.kind = OpKind::BatchNorm;
  node.name = name;
  node.inputs = {x};
  node.epsilon = epsilon;
  node.momentum = momentum;
  const Shape s{1, in.c, 1, 1};
  node.params = {add_param(name + ".gamma", ParamKind::Gamma, s, 0),
                 add_param(name + ".beta", ParamKind::Beta, s, 0),
                 add_param(name + ".running_mean", ParamKind::RunningMean, s, 0),
                 add_param(name + ".running_var", ParamKind::RunningVar, s, 0)};
  params_[node.params[0]].value.fill(T(1));
  params_[node.params[3]].value.fill(T(1));
  return push(std::move(node));
}

template <typename T>
std::size_t ModelGraph<T>::relu(std::size_t x, const std::string& name) {
  GraphNode node;
  node.kind = OpKind::Relu;
  node.name = name;
  node.inputs = {x};
  return push(std::move(node));
}

template <typename T>
std::size_t ModelGraph<T>::elu(std::size_t x, double alpha, const std::string& name) {
  if (!(alpha > 0.0)) throw ConfigError(name + ": ELU alpha must be positive");
  GraphNode node;
  node.kind = OpKind::Elu;
  node.name = name;
  node.inputs = {x};
  node.alpha = alpha;
  return push(std::move(node));
}

template <typename T>
std::size_t ModelGraph<T>::sigmoid(std::size_t x, const std::string& name) {
  GraphNode node;
  node.kind = OpKind::Sigmoid;
  node.name = name;
  node.inputs = {x};
  return push(std::move(node));
}

template <typename T>
std::size_t ModelGraph<T>::max_pool2(std::size_t x, const std::string& name) {
  GraphNode node;
  node.kind = OpKind::MaxPool2;
  node.name = name;
  node.inputs = {x};
  return push(std::move(node));
}

template <typename T>
std::size_t ModelGraph<T>::upsample2(std::size_t x, const std::string& name) {
  GraphNode node;
  node.kind = OpKind::Upsample2;
  node.name = name;
  node.inputs = {x};
  return push(std::move(node));
}

template <typename T>
std::size_t ModelGraph<T>::concat(std::size_t a, std::size_t b, const std::string& name) {
  GraphNode node;
  node.kind = OpKind::Concat;
  node.name = name;
  node.inputs = {a, b};
  return push(std::move(node));
}

template <typename T>
std::size_t ModelGraph<T>::add(std::size_t a, std::size_t b, const std::string& name) {
  GraphNode node;
  node.kind = OpKind::Add;
  node.name = name;
  node.inputs = {a, b};
  return push(std::move(node));
}

template <typename T>
void ModelGraph<T>::set_output(std::size_t node) {
  checked(node);
  output_ = node;
}

template <typename T>
Parameter<T>* ModelGraph<T>::find_parameter(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename T>
std::size_t ModelGraph<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) {
    if (p.trainable()) total += p.value.size();
  }
  return total;
}

template <typename T>
void ModelGraph<T>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& p : params_) {
    switch (p.kind) {
      case ParamKind::Kernel: {
        const double std = std::sqrt(2.0 / static_cast<double>(p.fan_in));
        for (auto& v : p.value.values()) v = static_cast<T>(normal(rng) * std);
        break;
      }
      case ParamKind::Gamma:
      case ParamKind::RunningVar:
        p.value.fill(T(1));
        break;
      case ParamKind::Bias:
      case ParamKind::Beta:
      case ParamKind::RunningMean:
        p.value.fill(T(0));
        break;
    }
  }
  forward_done_ = false;
}

template <typename T>
void ModelGraph<T>::audit() const {
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    const GraphNode& node = nodes_[i];
    for (std::size_t in : node.inputs) {
      if (in >= i) throw ShapeError(node.name + ": input does not precede node (cycle or bad order)");
    }
    const FeatureShape derived = infer(node);
    if (!(derived == node.shape)) {
      throw ShapeError(node.name + ": declared shape " + node.shape.str() + " but inputs imply " + derived.str());
    }
  }
}

template <typename T>
const TensorT<T>& ModelGraph<T>::forward(const TensorT<T>& batch, ops::BatchNormMode mode) {
  const FeatureShape& in = nodes_.front().shape;
  const Shape& bs = batch.shape();
  if (bs.c != in.c || bs.h != in.h || bs.w != in.w || bs.n == 0) {
    throw DataError("input batch " + bs.str() + " does not match expected (N, " + std::to_string(in.c) +
                    ", " + std::to_string(in.h) + ", " + std::to_string(in.w) + ")");
  }
  values_.resize(nodes_.size());
  bn_cache_.resize(nodes_.size());
  argmax_.resize(nodes_.size());
  node_grads_.clear();
  values_[0] = batch;

  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    const GraphNode& node = nodes_[i];
    TensorT<T>& out = values_[i];
    const TensorT<T>& x = values_[node.inputs[0]];
    switch (node.kind) {
      case OpKind::Input:
        break;
      case OpKind::Conv2d: {
        const auto& kernel = params_[node.params[0]].value;
        std::span<const T> bias;
        if (node.params.size() > 1) bias = params_[node.params[1]].value.values();
        ops::conv2d_forward(x, kernel, bias, node.conv, out, scratch_);
        break;
      }
      case OpKind::BatchNorm: {
        auto& rm = params_[node.params[2]].value;
        auto& rv = params_[node.params[3]].value;
        ops::batch_norm_forward<T>(x, params_[node.params[0]].value.values(), params_[node.params[1]].value.values(),
                                   node.epsilon, mode, rm.values(), rv.values(), node.momentum, out, bn_cache_[i]);
        break;
      }
      case OpKind::Relu:
        if (out.shape() != x.shape()) out = TensorT<T>(x.shape());
        relu_forward<T>(x.values(), out.values());
        break;
      case OpKind::Elu:
        if (out.shape() != x.shape()) out = TensorT<T>(x.shape());
        elu_forward<T>(x.values(), node.alpha, out.values());
        break;
      case OpKind::Sigmoid:
        if (out.shape() != x.shape()) out = TensorT<T>(x.shape());
        sigmoid_forward<T>(x.values(), out.values());
        break;
      case OpKind::MaxPool2:
        ops::max_pool2_forward(x, out, argmax_[i]);
        break;
      case OpKind::Upsample2:
        ops::upsample2_forward(x, out);
        break;
      case OpKind::Concat:
        ops::concat_forward(x, values_[node.inputs[1]], out);
        break;
      case OpKind::Add:
        ops::add_forward(x, values_[node.inputs[1]], out);
        break;
    }
  }
  forward_done_ = true;
  return values_[output_];
}

template <typename T>
void ModelGraph<T>::backward(const TensorT<T>& grad_output) {
  if (!forward_done_) throw UsageError("backward() called before forward()");
  const TensorT<T>& out = values_[output_];
  if (grad_output.shape() != out.shape()) {
    throw ShapeError("output gradient " + grad_output.shape().str() + " does not match output " +
                     out.shape().str());
  }
  for (auto& p : params_) {
    if (p.trainable()) {
      p.value.ensure_grad();
      p.value.zero_grad();
    }
  }
  node_grads_.assign(nodes_.size(), {});
  for (std::size_t i = 0; i <= output_; ++i) node_grads_[i].assign(values_[i].size(), T(0));
  std::copy(grad_output.values().begin(), grad_output.values().end(), node_grads_[output_].begin());

  for (std::size_t i = output_; i >= 1; --i) {
    const GraphNode& node = nodes_[i];
    std::span<const T> g = node_grads_[i];
    const std::size_t xi = node.inputs[0];
    const TensorT<T>& x = values_[xi];
    std::span<T> gx = node_grads_[xi];
    switch (node.kind) {
      case OpKind::Input:
        break;
      case OpKind::Conv2d: {
        auto& kernel = params_[node.params[0]].value;
        std::span<T> gb;
        if (node.params.size() > 1) gb = params_[node.params[1]].value.grad();
        ops::conv2d_backward<T>(x, kernel, node.conv, g, gx, kernel.grad(), gb, scratch_);
        break;
      }
      case OpKind::BatchNorm:
        ops::batch_norm_backward<T>(x, params_[node.params[0]].value.values(), bn_cache_[i], g, gx,
                                    params_[node.params[0]].value.grad(), params_[node.params[1]].value.grad());
        break;
      case OpKind::Relu:
        relu_backward<T>(x.values(), g, gx);
        break;
      case OpKind::Elu:
        elu_backward<T>(x.values(), node.alpha, g, gx);
        break;
      case OpKind::Sigmoid:
        sigmoid_backward<T>(values_[i].values(), g, gx);
        break;
      case OpKind::MaxPool2:
        ops::max_pool2_backward<T>(argmax_[i], g, gx);
        break;
      case OpKind::Upsample2:
        ops::upsample2_backward<T>(x.shape(), g, gx);
        break;
      case OpKind::Concat: {
        const std::size_t bi = node.inputs[1];
        if (bi == xi) {
          // concat(x, x): route both halves into the same buffer.
          std::vector<T> tmp(gx.size(), T(0));
          ops::concat_backward<T>(x.shape(), x.shape(), g, gx, tmp);
          for (std::size_t k = 0; k < tmp.size(); ++k) gx[k] += tmp[k];
        } else {
          ops::concat_backward<T>(x.shape(), values_[bi].shape(), g, gx, node_grads_[bi]);
        }
        break;
      }
      case OpKind::Add: {
        for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k];
        std::span<T> gb = node_grads_[node.inputs[1]];
        for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k];
        break;
      }
    }
    // Consumers of node i all have larger indices, so its gradient is final.
    std::vector<T>().swap(node_grads_[i]);
  }
}

template class ModelGraph<float>;
template class ModelGraph<double>;

}  // namespace bunet
