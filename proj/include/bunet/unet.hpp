#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "bunet/activations.hpp"
#include "bunet/graph.hpp"

namespace bunet {

struct UNetConfig {
  int depth = 4;           // number of downsampling steps
  int base_channels = 32;  // channels of the first cluster; doubled per level
  int input_size = 256;    // square input side, divisible by 2^depth
  int in_channels = 1;
  int out_channels = 1;

  void validate() const;
  /// Channel width at each level 0..depth (the last one is the bottleneck).
  std::vector<std::size_t> level_channels() const;
  int clusters_per_unet() const { return 2 * depth + 1; }
};

enum class Fusion { None, Add, Concat };

/// Where U-net #1's decoder is tapped for a bridge.
enum class BridgeTap {
  ClusterOutput,  // after the decoder cluster (default)
  ConcatStage,    // the decoder's skip-concatenation, before its convolutions
};

std::string_view to_string(Fusion f);
Fusion parse_fusion(std::string_view name);
std::string_view to_string(BridgeTap t);
BridgeTap parse_bridge_tap(std::string_view name);

struct BridgeConfig {
  Fusion bridging = Fusion::Concat;
  Fusion skip = Fusion::Add;
  BridgeTap tap = BridgeTap::ClusterOutput;
  friend bool operator==(const BridgeConfig&, const BridgeConfig&) = default;
};

enum class Architecture { UNet, Stacked };

std::string_view to_string(Architecture a);
Architecture parse_architecture(std::string_view name);

/// Everything needed to rebuild a network.
struct ModelSpec {
  Architecture architecture = Architecture::Stacked;
  UNetConfig unet;
  BridgeConfig bridge;
  ActivationScheme scheme = ActivationScheme::cluster3();

  int cluster_count() const {
    return architecture == Architecture::UNet ? unet.clusters_per_unet() : 2 * unet.clusters_per_unet();
  }
  void validate() const;
};

/// Single U-net: `depth` encoder clusters with max pooling, a bottleneck
/// cluster, `depth` decoder levels (upsample + 2x2 conv, concatenation with
/// the encoder feature, cluster) and a 1x1 convolution + sigmoid head.
/// A cluster is two 3x3 conv -> batch-norm -> activation blocks.
template <typename T>
ModelGraph<T> build_unet(const UNetConfig& config, const ActivationScheme& scheme);

/// Two U-nets in sequence. U-net #2 consumes concat(input image, U-net #1's
/// last decoder feature). Bridges fuse U-net #1's decoder output at levels
/// 1..depth-1 into the matching U-net #2 encoder cluster, between its two
/// conv blocks (where channel widths agree). Skip fusion combines the two
/// encoders' same-level features entering U-net #2's decoder.
template <typename T>
ModelGraph<T> build_bridged(const UNetConfig& config, const BridgeConfig& bridge, const ActivationScheme& scheme);

template <typename T>
ModelGraph<T> build_model(const ModelSpec& spec);

struct ConvLayerInfo {
  int layer = 0;    // 1-based sequence number among cluster convolutions
  int cluster = 0;  // 1-based cluster number
  int subnet = 0;
  std::size_t conv_node = 0;
  std::size_t activation_node = 0;
  OpKind activation = OpKind::Elu;
};

struct ClusterMap {
  int cluster_count = 0;
  int clusters_per_subnet = 0;
  std::vector<ConvLayerInfo> layers;

  int cluster_of_layer(int layer) const;
  std::vector<int> layers_in_cluster(int cluster) const;
  /// Clusters whose activations are ReLU, read back from the graph.
  std::set<int> relu_clusters() const;
};

/// Cluster numbering: U-net #1 encoder top to bottom (1..depth), bottleneck
/// (depth+1), decoder bottom to top (depth+2..2 depth+1), then U-net #2
/// likewise. Throws ConfigError for graphs not produced by these builders.
template <typename T>
ClusterMap cluster_index_map(const ModelGraph<T>& graph);

/// Nodes tagged as bridge or skip fusions (edges between the two U-nets
/// other than the sequential stacking edge).
template <typename T>
std::vector<std::size_t> cross_fusion_nodes(const ModelGraph<T>& graph);

/// Trainable scalars in a subnet's decoder (up-convs, decoder clusters, head).
template <typename T>
std::size_t decoder_parameter_count(const ModelGraph<T>& graph, int subnet);

/// Convolution nodes of any kind strictly between two cluster conv layers in
/// execution order.
template <typename T>
int conv_nodes_between(const ModelGraph<T>& graph, const ClusterMap& map, int first_layer, int second_layer);

}  // namespace bunet
