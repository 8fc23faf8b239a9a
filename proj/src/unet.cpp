#include "bunet/unet.hpp"

#include <algorithm>

#include "bunet/errors.hpp"

namespace bunet {

std::string_view to_string(Fusion f) {
  switch (f) {
    case Fusion::None: return "none";
    case Fusion::Add: return "add";
    case Fusion::Concat: return "concat";
  }
  return "?";
}

Fusion parse_fusion(std::string_view name) {
  if (name == "none") return Fusion::None;
  if (name == "add" || name == "addition") return Fusion::Add;
  if (name == "concat" || name == "concatenation") return Fusion::Concat;
  throw ConfigError("unknown fusion '" + std::string(name) + "' (expected none, add or concat)");
}

std::string_view to_string(BridgeTap t) {
  return t == BridgeTap::ClusterOutput ? "cluster-output" : "concat-stage";
}

BridgeTap parse_bridge_tap(std::string_view name) {
  if (name == "cluster-output") return BridgeTap::ClusterOutput;
  if (name == "concat-stage") return BridgeTap::ConcatStage;
  throw ConfigError("unknown bridge tap '" + std::string(name) + "' (expected cluster-output or concat-stage)");
}

std::string_view to_string(Architecture a) { return a == Architecture::UNet ? "unet" : "stacked"; }

Architecture parse_architecture(std::string_view name) {
  if (name == "unet") return Architecture::UNet;
  if (name == "stacked" || name == "bridged") return Architecture::Stacked;
  throw ConfigError("unknown architecture '" + std::string(name) + "' (expected unet or stacked)");
}

void UNetConfig::validate() const {
  if (depth < 1 || depth > 8) throw ConfigError("depth must be in [1, 8]");
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (in_channels < 1 || out_channels < 1) throw ConfigError("channel counts must be >= 1");
  if (input_size < 1 || input_size % (1 << depth) != 0) {
    throw ConfigError("input_size " + std::to_string(input_size) + " is not divisible by 2^depth = " +
                      std::to_string(1 << depth));
  }
}

std::vector<std::size_t> UNetConfig::level_channels() const {
  std::vector<std::size_t> out;
  for (int l = 0; l <= depth; ++l) out.push_back(static_cast<std::size_t>(base_channels) << l);
  return out;
}

void ModelSpec::validate() const {
  unet.validate();
  scheme.validate(cluster_count());
  if (architecture == Architecture::Stacked && bridge.bridging == Fusion::Add &&
      bridge.tap == BridgeTap::ConcatStage) {
    throw ConfigError("add bridging cannot tap the concatenation stage: channel widths differ");
  }
}

namespace {

struct UNetTaps {
  std::vector<std::size_t> encoder;         // cluster output per level
  std::vector<std::size_t> decoder;         // decoder cluster output per level
  std::vector<std::size_t> decoder_concat;  // decoder skip-concatenation per level
  std::size_t last = 0;
};

template <typename T>
class Builder {
 public:
  Builder(ModelGraph<T>& g, const UNetConfig& cfg, const ActivationScheme& scheme)
      : g_(g), cfg_(cfg), scheme_(scheme), widths_(cfg.level_channels()) {}

  // `bridge` (optional) is fused after the first conv block.
  std::size_t cluster(std::size_t x, std::size_t width, int number, int subnet, int level, bool decoder,
                      std::size_t bridge = kNone, Fusion bridge_fusion = Fusion::None) {
    const std::string prefix = "u" + std::to_string(subnet) + ".c" + std::to_string(number);
    std::size_t h = block(x, width, prefix + ".b1", number, subnet, level, decoder);
    if (bridge != kNone && bridge_fusion != Fusion::None) {
      const std::string name = prefix + ".bridge";
      h = bridge_fusion == Fusion::Add ? g_.add(h, bridge, name) : g_.concat(h, bridge, name);
      tag(h, NodeRole::Bridge, subnet, number, level, decoder);
    }
    return block(h, width, prefix + ".b2", number, subnet, level, decoder);
  }

  UNetTaps unet(std::size_t input, int subnet, const UNetTaps* first, const BridgeConfig* bridge) {
    const int depth = cfg_.depth;
    const int offset = (subnet - 1) * cfg_.clusters_per_unet();
    UNetTaps taps;
    taps.decoder.assign(depth, kNone);
    taps.decoder_concat.assign(depth, kNone);
    std::size_t x = input;
    for (int l = 0; l < depth; ++l) {
      std::size_t bridge_src = kNone;
      Fusion bridge_fusion = Fusion::None;
      if (first != nullptr && bridge != nullptr && l >= 1 && bridge->bridging != Fusion::None) {
        bridge_src = bridge->tap == BridgeTap::ClusterOutput ? first->decoder[l] : first->decoder_concat[l];
        bridge_fusion = bridge->bridging;
      }
      const std::size_t enc = cluster(x, widths_[l], offset + l + 1, subnet, l, false, bridge_src, bridge_fusion);
      taps.encoder.push_back(enc);
      x = g_.max_pool2(enc, "u" + std::to_string(subnet) + ".pool" + std::to_string(l));
      tag(x, NodeRole::Plain, subnet, 0, l + 1, false);
    }
    x = cluster(x, widths_[depth], offset + depth + 1, subnet, depth, false);
    for (int l = depth - 1; l >= 0; --l) {
      const std::string lv = "u" + std::to_string(subnet) + ".up" + std::to_string(l);
      std::size_t up = g_.upsample2(x, lv + ".upsample");
      tag(up, NodeRole::Plain, subnet, 0, l, true);
      up = g_.conv2d(up, widths_[l], ops::Conv2dGeometry::same(2), lv + ".conv");
      tag(up, NodeRole::UpConv, subnet, 0, l, true);

      std::size_t skip = taps.encoder[l];
      if (first != nullptr && bridge != nullptr && bridge->skip != Fusion::None) {
        const std::string name = "u" + std::to_string(subnet) + ".skip" + std::to_string(l);
        skip = bridge->skip == Fusion::Add ? g_.add(first->encoder[l], taps.encoder[l], name)
                                           : g_.concat(first->encoder[l], taps.encoder[l], name);
        tag(skip, NodeRole::Skip, subnet, 0, l, true);
      }
      const std::size_t cat = g_.concat(up, skip, lv + ".concat");
      tag(cat, NodeRole::Plain, subnet, 0, l, true);
      taps.decoder_concat[l] = cat;
      const int number = offset + depth + 1 + (depth - l);
      x = cluster(cat, widths_[l], number, subnet, l, true);
      taps.decoder[l] = x;
    }
    taps.last = x;
    return taps;
  }

  std::size_t head(std::size_t x, int subnet) {
    std::size_t h = g_.conv2d(x, static_cast<std::size_t>(cfg_.out_channels), ops::Conv2dGeometry::padded(1, 1, 0),
                              "head.conv");
    tag(h, NodeRole::Head, subnet, 0, 0, true);
    h = g_.sigmoid(h, "head.sigmoid");
    tag(h, NodeRole::Head, subnet, 0, 0, true);
    return h;
  }

  void tag(std::size_t node, NodeRole role, int subnet, int cluster, int level, bool decoder) {
    GraphNode& n = g_.node(node);
    n.role = role;
    n.subnet = subnet;
    n.cluster = cluster;
    n.level = level;
    n.decoder = decoder;
  }

  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

 private:
  std::size_t block(std::size_t x, std::size_t width, const std::string& name, int number, int subnet, int level,
                    bool decoder) {
    std::size_t h = g_.conv2d(x, width, ops::Conv2dGeometry::same(3), name + ".conv");
    tag(h, NodeRole::ClusterConv, subnet, number, level, decoder);
    h = g_.batch_norm(h, name + ".bn");
    tag(h, NodeRole::Plain, subnet, number, level, decoder);
    if (scheme_.uses_relu(number)) {
      h = g_.relu(h, name + ".relu");
    } else {
      h = g_.elu(h, scheme_.alpha, name + ".elu");
    }
    tag(h, NodeRole::Plain, subnet, number, level, decoder);
    return h;
  }

  ModelGraph<T>& g_;
  const UNetConfig& cfg_;
  const ActivationScheme& scheme_;
  std::vector<std::size_t> widths_;
};

template <typename T>
void stamp(ModelGraph<T>& g, const char* builder, const UNetConfig& cfg, int clusters) {
  g.metadata()["builder"] = builder;
  g.metadata()["depth"] = std::to_string(cfg.depth);
  g.metadata()["clusters"] = std::to_string(clusters);
  g.metadata()["clusters_per_subnet"] = std::to_string(cfg.clusters_per_unet());
}

}  // namespace

template <typename T>
ModelGraph<T> build_unet(const UNetConfig& config, const ActivationScheme& scheme) {
  config.validate();
  scheme.validate(config.clusters_per_unet());
  const auto side = static_cast<std::size_t>(config.input_size);
  ModelGraph<T> g({static_cast<std::size_t>(config.in_channels), side, side});
  Builder<T> b(g, config, scheme);
  const UNetTaps taps = b.unet(g.input(), 1, nullptr, nullptr);
  g.set_output(b.head(taps.last, 1));
  stamp(g, "unet", config, config.clusters_per_unet());
  return g;
}

template <typename T>
ModelGraph<T> build_bridged(const UNetConfig& config, const BridgeConfig& bridge, const ActivationScheme& scheme) {
  config.validate();
  scheme.validate(2 * config.clusters_per_unet());
  const auto side = static_cast<std::size_t>(config.input_size);
  ModelGraph<T> g({static_cast<std::size_t>(config.in_channels), side, side});
  Builder<T> b(g, config, scheme);
  const UNetTaps first = b.unet(g.input(), 1, nullptr, nullptr);
  const std::size_t stacked = g.concat(g.input(), first.last, "stack.concat");
  b.tag(stacked, NodeRole::Stack, 2, 0, 0, false);
  const UNetTaps second = b.unet(stacked, 2, &first, &bridge);
  g.set_output(b.head(second.last, 2));
  stamp(g, "bridged", config, 2 * config.clusters_per_unet());
  g.metadata()["bridging"] = std::string(to_string(bridge.bridging));
  g.metadata()["skip"] = std::string(to_string(bridge.skip));
  g.metadata()["bridge_tap"] = std::string(to_string(bridge.tap));
  return g;
}

template <typename T>
ModelGraph<T> build_model(const ModelSpec& spec) {
  spec.validate();
  if (spec.architecture == Architecture::UNet) return build_unet<T>(spec.unet, spec.scheme);
  return build_bridged<T>(spec.unet, spec.bridge, spec.scheme);
}

int ClusterMap::cluster_of_layer(int layer) const {
  for (const auto& l : layers) {
    if (l.layer == layer) return l.cluster;
  }
  throw ConfigError("no convolution layer " + std::to_string(layer));
}

std::vector<int> ClusterMap::layers_in_cluster(int cluster) const {
  std::vector<int> out;
  for (const auto& l : layers) {
    if (l.cluster == cluster) out.push_back(l.layer);
  }
  return out;
}

std::set<int> ClusterMap::relu_clusters() const {
  std::set<int> out;
  for (const auto& l : layers) {
    if (l.activation == OpKind::Relu) out.insert(l.cluster);
  }
  return out;
}

template <typename T>
ClusterMap cluster_index_map(const ModelGraph<T>& graph) {
  const auto& md = graph.metadata();
  const auto builder = md.find("builder");
  if (builder == md.end() || (builder->second != "unet" && builder->second != "bridged")) {
    throw ConfigError("unsupported graph: cluster numbering is only defined for U-net builder output");
  }
  ClusterMap map;
  map.cluster_count = std::stoi(md.at("clusters"));
  map.clusters_per_subnet = std::stoi(md.at("clusters_per_subnet"));
  const auto& nodes = graph.nodes();
  auto consumer = [&](std::size_t producer, OpKind kind) -> std::size_t {
    for (std::size_t i = producer + 1; i < nodes.size(); ++i) {
      if (nodes[i].kind == kind && nodes[i].inputs.front() == producer) return i;
    }
    throw ConfigError("unsupported graph: cluster block without " + std::string(to_string(kind)));
  };
  int layer = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].role != NodeRole::ClusterConv) continue;
    ConvLayerInfo info;
    info.layer = ++layer;
    info.cluster = nodes[i].cluster;
    info.subnet = nodes[i].subnet;
    info.conv_node = i;
    const std::size_t bn = consumer(i, OpKind::BatchNorm);
    std::size_t act = Builder<T>::kNone;
    for (std::size_t k = bn + 1; k < nodes.size(); ++k) {
      if ((nodes[k].kind == OpKind::Relu || nodes[k].kind == OpKind::Elu) && nodes[k].inputs.front() == bn) {
        act = k;
        break;
      }
    }
    if (act == Builder<T>::kNone) throw ConfigError("unsupported graph: cluster block without activation");
    info.activation_node = act;
    info.activation = nodes[act].kind;
    map.layers.push_back(info);
  }
  return map;
}

template <typename T>
std::vector<std::size_t> cross_fusion_nodes(const ModelGraph<T>& graph) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < graph.nodes().size(); ++i) {
    const NodeRole r = graph.nodes()[i].role;
    if (r == NodeRole::Bridge || r == NodeRole::Skip) out.push_back(i);
  }
  return out;
}

template <typename T>
std::size_t decoder_parameter_count(const ModelGraph<T>& graph, int subnet) {
  std::size_t total = 0;
  for (const auto& node : graph.nodes()) {
    if (node.subnet != subnet || !node.decoder) continue;
    for (std::size_t p : node.params) {
      if (graph.parameters()[p].trainable()) total += graph.parameters()[p].value.size();
    }
  }
  return total;
}

template <typename T>
int conv_nodes_between(const ModelGraph<T>& graph, const ClusterMap& map, int first_layer, int second_layer) {
  std::size_t a = 0;
  std::size_t b = 0;
  for (const auto& l : map.layers) {
    if (l.layer == first_layer) a = l.conv_node;
    if (l.layer == second_layer) b = l.conv_node;
  }
  if (a == 0 || b == 0 || a >= b) throw ConfigError("invalid conv layer range");
  int count = 0;
  for (std::size_t i = a + 1; i < b; ++i) count += graph.nodes()[i].kind == OpKind::Conv2d ? 1 : 0;
  return count;
}

#define BUNET_INSTANTIATE_UNET(T)                                                                      \
  template ModelGraph<T> build_unet<T>(const UNetConfig&, const ActivationScheme&);                    \
  template ModelGraph<T> build_bridged<T>(const UNetConfig&, const BridgeConfig&, const ActivationScheme&); \
  template ModelGraph<T> build_model<T>(const ModelSpec&);                                             \
  template ClusterMap cluster_index_map<T>(const ModelGraph<T>&);                                      \
  template std::vector<std::size_t> cross_fusion_nodes<T>(const ModelGraph<T>&);                       \
  template std::size_t decoder_parameter_count<T>(const ModelGraph<T>&, int);                          \
  template int conv_nodes_between<T>(const ModelGraph<T>&, const ClusterMap&, int, int);

BUNET_INSTANTIATE_UNET(float)
BUNET_INSTANTIATE_UNET(double)
#undef BUNET_INSTANTIATE_UNET

}  // namespace bunet
