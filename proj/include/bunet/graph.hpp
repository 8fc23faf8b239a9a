#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bunet/ops.hpp"
#include "bunet/tensor.hpp"

namespace bunet {

enum class OpKind { Input, Conv2d, BatchNorm, Relu, Elu, Sigmoid, MaxPool2, Upsample2, Concat, Add };

/// Structural tag attached by the network builders for introspection.
enum class NodeRole {
  Plain,
  ClusterConv,  // 3x3 convolution inside a numbered cluster
  UpConv,       // 2x2 convolution after upsampling
  Head,         // final 1x1 convolution
  Stack,        // fusion feeding U-net #1's output into U-net #2
  Bridge,       // U-net #1 decoder -> U-net #2 encoder fusion
  Skip,         // same-level encoder fusion entering U-net #2's decoder
};

std::string_view to_string(OpKind kind);
std::string_view to_string(NodeRole role);

/// Per-sample feature shape (channels, height, width); batch size is free.
struct FeatureShape {
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
  Shape with_batch(std::size_t n) const { return {n, c, h, w}; }
  std::string str() const;
};

struct GraphNode {
  OpKind kind = OpKind::Input;
  std::string name;
  std::vector<std::size_t> inputs;
  FeatureShape shape;
  std::vector<std::size_t> params;  // indices into ModelGraph::parameters()
  ops::Conv2dGeometry conv{};
  double alpha = 1.0;
  double epsilon = 1e-5;
  double momentum = 0.9;
  NodeRole role = NodeRole::Plain;
  int subnet = 0;   // 1 or 2 inside a stacked network, 0 elsewhere
  int cluster = 0;  // 1-based cluster number, 0 when not inside a cluster
  int level = -1;   // resolution level (0 = full resolution)
  bool decoder = false;
};

enum class ParamKind { Kernel, Bias, Gamma, Beta, RunningMean, RunningVar };

template <typename T>
struct Parameter {
  std::string name;
  ParamKind kind = ParamKind::Kernel;
  TensorT<T> value;
  std::size_t fan_in = 0;

  bool trainable() const { return kind != ParamKind::RunningMean && kind != ParamKind::RunningVar; }
};

/// Directed acyclic computation graph with a single input node (index 0).
/// Nodes are appended in evaluation order; every input must already exist, so
/// insertion order is a topological order. Shape rules are checked when a
/// node is added and violations throw ShapeError before any arithmetic runs.
template <typename T>
class ModelGraph {
 public:
  explicit ModelGraph(FeatureShape input_shape);

  std::size_t input() const { return 0; }

  std::size_t conv2d(std::size_t x, std::size_t out_channels, const ops::Conv2dGeometry& geometry,
                     const std::string& name, bool bias = true);
  std::size_t batch_norm(std::size_t x, const std::string& name, double epsilon = 1e-5,
                         double momentum = 0.9);
  std::size_t relu(std::size_t x, const std::string& name);
  std::size_t elu(std::size_t x, double alpha, const std::string& name);
  std::size_t sigmoid(std::size_t x, const std::string& name);
  std::size_t max_pool2(std::size_t x, const std::string& name);
  std::size_t upsample2(std::size_t x, const std::string& name);
  std::size_t concat(std::size_t a, std::size_t b, const std::string& name);
  std::size_t add(std::size_t a, std::size_t b, const std::string& name);

  void set_output(std::size_t node);
  std::size_t output() const { return output_; }

  const std::vector<GraphNode>& nodes() const { return nodes_; }
  GraphNode& node(std::size_t i) { return nodes_.at(i); }
  const GraphNode& node(std::size_t i) const { return nodes_.at(i); }

  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  Parameter<T>* find_parameter(std::string_view name);
  /// Number of scalar values in trainable parameters.
  std::size_t parameter_count() const;

  /// He-normal kernels (std sqrt(2 / fan_in)), zero biases, unit BN scale.
  void initialize(std::uint64_t seed);

  const TensorT<T>& forward(const TensorT<T>& batch, ops::BatchNormMode mode);
  /// Propagates `grad_output` (same shape as the output) back through the
  /// graph. Parameter gradients are overwritten, not accumulated.
  void backward(const TensorT<T>& grad_output);

  bool has_forward() const { return forward_done_; }
  const TensorT<T>& value(std::size_t node) const { return values_.at(node); }
  /// Gradient w.r.t. the graph input from the last backward pass.
  std::span<const T> input_grad() const { return node_grads_.empty() ? std::span<const T>{} : std::span<const T>(node_grads_[0]); }

  /// Re-derives every node's shape from its inputs and compares it with the
  /// declared shape. Throws ShapeError on the first inconsistency.
  void audit() const;

  /// Free-form key/value metadata (builder identity, configuration).
  std::map<std::string, std::string>& metadata() { return metadata_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  /// Deep copy with parameters converted to another scalar type.
  template <typename U>
  ModelGraph<U> convert() const {
    ModelGraph<U> out(nodes_.front().shape);
    out.nodes_ = nodes_;
    out.output_ = output_;
    out.metadata_ = metadata_;
    out.params_.reserve(params_.size());
    for (const auto& p : params_) {
      out.params_.push_back({p.name, p.kind, tensor_cast<U>(p.value), p.fan_in});
    }
    return out;
  }

 private:
  template <typename U>
  friend class ModelGraph;

  std::size_t push(GraphNode node);
  std::size_t add_param(const std::string& name, ParamKind kind, Shape shape, std::size_t fan_in);
  FeatureShape infer(const GraphNode& node) const;
  const GraphNode& checked(std::size_t i) const;

  std::vector<GraphNode> nodes_;
  std::vector<Parameter<T>> params_;
  std::size_t output_ = 0;
  std::map<std::string, std::string> metadata_;

  // Per-pass state.
  bool forward_done_ = false;
  std::vector<TensorT<T>> values_;
  std::vector<std::vector<T>> node_grads_;
  std::vector<ops::BatchNormCache> bn_cache_;
  std::vector<std::vector<std::uint32_t>> argmax_;
  std::vector<T> scratch_;
};

extern template class ModelGraph<float>;
extern template class ModelGraph<double>;

}  // namespace bunet
