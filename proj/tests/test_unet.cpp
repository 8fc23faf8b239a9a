#include <doctest.h>

#include <algorithm>
#include <set>

#include "bunet/errors.hpp"
#include "bunet/trainer.hpp"
#include "bunet/unet.hpp"
#include "oracles.hpp"

using namespace bunet;

namespace {

UNetConfig desk(int depth = 4, int base = 8, int size = 64) {
  UNetConfig c;
  c.depth = depth;
  c.base_channels = base;
  c.input_size = size;
  return c;
}

// Input channel count of a node's first input.
std::size_t in_channels(const ModelGraph<float>& g, std::size_t node) {
  return g.node(g.node(node).inputs.front()).shape.c;
}

// Second conv of each U-net #2 encoder cluster, by level.
std::vector<std::size_t> second_encoder_b2_convs(const ModelGraph<float>& g, const ClusterMap& map, int depth) {
  std::vector<std::size_t> out;
  for (int l = 0; l < depth; ++l) {
    const int cluster = map.clusters_per_subnet + l + 1;
    const auto layers = map.layers_in_cluster(cluster);
    REQUIRE(layers.size() == 2);
    for (const auto& info : map.layers)
      if (info.layer == layers[1]) out.push_back(info.conv_node);
  }
  (void)g;
  return out;
}

}  // namespace

TEST_CASE("channel doubling per level") {
  UNetConfig c = desk(4, 32, 256);
  CHECK(c.level_channels() == std::vector<std::size_t>{32, 64, 128, 256, 512});
  const auto g = build_unet<float>(desk(4, 32, 256), ActivationScheme::all_elu());
  const auto map = cluster_index_map(g);
  std::vector<std::size_t> widths;
  for (int cl = 1; cl <= 5; ++cl) widths.push_back(g.node(map.layers[2 * cl - 1].conv_node).shape.c);
  CHECK(widths == std::vector<std::size_t>{32, 64, 128, 256, 512});
}

TEST_CASE("indivisible input size is a configuration error") {
  CHECK_THROWS_AS(build_unet<float>(desk(4, 8, 60), {}), ConfigError);
  CHECK_THROWS_AS(build_bridged<float>(desk(3, 8, 36), {}, {}), ConfigError);
  CHECK_THROWS_AS(build_unet<float>(desk(0, 8, 64), {}), ConfigError);
  CHECK_THROWS_AS(build_unet<float>(desk(2, 0, 64), {}), ConfigError);
}

TEST_CASE("parameter count of the smallest U-net by hand") {
  // depth 1, base 2, one input and one output channel.
  // 3x3 conv: out*in*9 + out bias; BN: gamma and beta per channel.
  const std::size_t c1 = (2 * 1 * 9 + 2 + 4) + (2 * 2 * 9 + 2 + 4);    // 1->2, 2->2
  const std::size_t c2 = (4 * 2 * 9 + 4 + 8) + (4 * 4 * 9 + 4 + 8);    // 2->4, 4->4
  const std::size_t up = 2 * 4 * 4 + 2;                                // 2x2 conv 4->2
  const std::size_t c3 = (2 * 4 * 9 + 2 + 4) + (2 * 2 * 9 + 2 + 4);    // concat 2+2 -> 2, 2->2
  const std::size_t head = 1 * 2 + 1;                                  // 1x1 conv 2->1
  const auto g = build_unet<float>(desk(1, 2, 8), ActivationScheme::all_elu());
  CHECK(g.parameter_count() == c1 + c2 + up + c3 + head);
}

TEST_CASE("all-zero input gives finite probabilities in (0,1)") {
  for (auto arch : {Architecture::UNet, Architecture::Stacked}) {
    ModelSpec spec;
    spec.architecture = arch;
    spec.unet = desk(3, 4, 32);
    spec.scheme = arch == Architecture::UNet ? ActivationScheme{{2}, 1.0} : ActivationScheme::cluster3();
    auto g = build_model<float>(spec);
    g.initialize(1);
    for (auto mode : {ops::BatchNormMode::Train, ops::BatchNormMode::Eval}) {
      const Tensor& y = g.forward(Tensor(Shape{2, 1, 32, 32}), mode);
      CHECK(y.shape() == Shape{2, 1, 32, 32});
      CHECK(y.all_finite());
      const auto [lo, hi] = std::minmax_element(y.values().begin(), y.values().end());
      CHECK(*lo > 0.0f);
      CHECK(*hi < 1.0f);
    }
  }
}

TEST_CASE("forward output contract and eval determinism") {
  auto g = build_bridged<float>(desk(), {}, ActivationScheme::cluster3());
  g.initialize(5);
  std::mt19937_64 rng(2);
  const Tensor x = tensor_cast<float>(oracle::random_tensor(Shape{4, 1, 64, 64}, rng));
  const Tensor a = g.forward(x, ops::BatchNormMode::Eval);
  const Tensor b = g.forward(x, ops::BatchNormMode::Eval);
  CHECK(a.shape() == Shape{4, 1, 64, 64});
  CHECK(a.storage() == b.storage());
  const auto [lo, hi] = std::minmax_element(a.values().begin(), a.values().end());
  CHECK(*lo > 0.0f);
  CHECK(*hi < 1.0f);
}

TEST_CASE("wrong input size names the expected size") {
  auto g = build_bridged<float>(desk(), {}, {});
  g.initialize(1);
  try {
    g.forward(Tensor(Shape{1, 1, 32, 32}), ops::BatchNormMode::Eval);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("64") != std::string::npos);
  }
}

TEST_CASE("default bridged net runs forward and backward with finite values") {
  auto g = build_bridged<float>(desk(), {}, ActivationScheme::cluster3());
  g.initialize(3);
  std::mt19937_64 rng(4);
  const Tensor x = tensor_cast<float>(oracle::random_tensor(Shape{1, 1, 64, 64}, rng));
  const Tensor& y = g.forward(x, ops::BatchNormMode::Train);
  CHECK(y.all_finite());
  Tensor gy(y.shape(), 1e-3f);
  g.backward(gy);
  auto finite = [](std::span<const float> s) { return std::all_of(s.begin(), s.end(), [](float v) { return std::isfinite(v); }); };
  for (const auto& p : g.parameters())
    if (p.trainable()) CHECK(finite(p.value.grad()));
  CHECK(finite(g.input_grad()));
}

TEST_CASE("cluster numbering at depth 4") {
  const auto g = build_bridged<float>(desk(), {}, ActivationScheme::cluster3());
  const auto map = cluster_index_map(g);
  CHECK(map.cluster_count == 18);
  CHECK(map.layers.size() == 36);
  for (int c = 1; c <= 18; ++c) CHECK(map.layers_in_cluster(c).size() == 2);
  CHECK(map.cluster_of_layer(7) == 4);
  CHECK(map.cluster_of_layer(10) == 5);
  CHECK(map.cluster_of_layer(25) == 13);
  CHECK(map.cluster_of_layer(28) == 14);
  for (const auto& l : map.layers) CHECK(l.subnet == (l.cluster <= 9 ? 1 : 2));
  // encoder top to bottom, bottleneck, decoder bottom to top
  for (const auto& l : map.layers) {
    const auto& node = g.node(l.conv_node);
    const int local = (l.cluster - 1) % 9 + 1;
    if (local <= 4) {
      CHECK_FALSE(node.decoder);
      CHECK(node.level == local - 1);
    } else if (local == 5) {
      CHECK(node.level == 4);
    } else {
      CHECK(node.decoder);
      CHECK(node.level == 9 - local);
    }
  }
}

TEST_CASE("cluster numbering at depth 1") {
  const auto g = build_bridged<float>(desk(1, 4, 16), {}, ActivationScheme::all_elu());
  const auto map = cluster_index_map(g);
  CHECK(map.cluster_count == 6);
  std::set<int> seen;
  for (const auto& l : map.layers) seen.insert(l.cluster);
  CHECK(seen == std::set<int>{1, 2, 3, 4, 5, 6});
  const auto single = cluster_index_map(build_unet<float>(desk(1, 4, 16), {}));
  CHECK(single.cluster_count == 3);
}

TEST_CASE("cluster map rejects foreign graphs") {
  ModelGraph<float> g(FeatureShape{1, 8, 8});
  g.set_output(g.relu(g.conv2d(g.input(), 2, ops::Conv2dGeometry::same(3), "c"), "r"));
  CHECK_THROWS_AS(cluster_index_map(g), ConfigError);
}

TEST_CASE("cluster3 places ReLU at 4,5,13,14 with 18 convolutions between the groups") {
  const auto g = build_bridged<float>(desk(), {}, ActivationScheme::cluster3());
  const auto map = cluster_index_map(g);
  CHECK(map.relu_clusters() == std::set<int>{4, 5, 13, 14});
  std::vector<int> relu_layers;
  for (const auto& l : map.layers)
    if (l.activation == OpKind::Relu) relu_layers.push_back(l.layer);
  CHECK(relu_layers == std::vector<int>{7, 8, 9, 10, 25, 26, 27, 28});
  CHECK(conv_nodes_between(g, map, 10, 25) == 18);
}

TEST_CASE("every preset is applied exactly as listed") {
  for (const char* name : {"all-elu", "all-relu", "cluster1", "cluster2", "cluster3"}) {
    const auto scheme = ActivationScheme::preset(name);
    const auto g = build_bridged<float>(desk(), {}, scheme);
    const auto map = cluster_index_map(g);
    CHECK(map.relu_clusters() == scheme.relu_clusters);
    for (const auto& l : map.layers) {
      const auto& act = g.node(l.activation_node);
      CHECK(act.kind == (scheme.uses_relu(l.cluster) ? OpKind::Relu : OpKind::Elu));
      CHECK(act.cluster == l.cluster);
    }
  }
}

TEST_CASE("scheme outside the network's clusters is rejected") {
  CHECK_THROWS_AS(build_unet<float>(desk(), ActivationScheme::cluster3()), ConfigError);
  CHECK_THROWS_AS(build_bridged<float>(desk(2, 4, 16), {}, ActivationScheme::cluster3()), ConfigError);
}

TEST_CASE("all table 1 configurations build and differ in edge structure") {
  const auto rows = ablation_rows(AblationSuite::Table1, desk_defaults());
  REQUIRE(rows.size() == 6);
  std::vector<ModelGraph<float>> graphs;
  for (const auto& r : rows) {
    CHECK_NOTHROW(r.run.validate());
    graphs.push_back(build_model<float>(r.run.model));
    CHECK_NOTHROW(graphs.back().audit());
  }
  CHECK(graphs[0].metadata().at("builder") == "unet");
  CHECK(cluster_index_map(graphs[0]).cluster_count == 9);
  auto count = [](const ModelGraph<float>& g, NodeRole role, OpKind kind) {
    int n = 0;
    for (std::size_t i : cross_fusion_nodes(g))
      if (g.node(i).role == role && g.node(i).kind == kind) ++n;
    return n;
  };
  const int depth = 4;
  // (none, none): a plain stack
  CHECK(cross_fusion_nodes(graphs[1]).empty());
  CHECK(count(graphs[2], NodeRole::Bridge, OpKind::Add) == depth - 1);
  CHECK(cross_fusion_nodes(graphs[2]).size() == depth - 1);
  CHECK(count(graphs[3], NodeRole::Bridge, OpKind::Concat) == depth - 1);
  CHECK(cross_fusion_nodes(graphs[3]).size() == depth - 1);
  CHECK(count(graphs[4], NodeRole::Bridge, OpKind::Concat) == depth - 1);
  CHECK(count(graphs[4], NodeRole::Skip, OpKind::Concat) == depth);
  CHECK(count(graphs[5], NodeRole::Bridge, OpKind::Concat) == depth - 1);
  CHECK(count(graphs[5], NodeRole::Skip, OpKind::Add) == depth);
}

TEST_CASE("plain stack has exactly one edge from U-net 1 into U-net 2") {
  const auto g = build_bridged<float>(desk(), {Fusion::None, Fusion::None}, ActivationScheme::all_elu());
  int crossings = 0;
  for (std::size_t i = 0; i < g.nodes().size(); ++i) {
    const auto& n = g.node(i);
    for (std::size_t in : n.inputs)
      if (n.subnet == 2 && g.node(in).subnet == 1) ++crossings;
  }
  CHECK(crossings == 1);
}

TEST_CASE("concat skip gives U-net 2's decoder more parameters than add skip") {
  const auto rows = ablation_rows(AblationSuite::Table1, desk_defaults());
  const auto concat_skip = build_model<float>(rows[4].run.model);
  const auto add_skip = build_model<float>(rows[5].run.model);
  CHECK(decoder_parameter_count(concat_skip, 2) > decoder_parameter_count(add_skip, 2));
  CHECK(decoder_parameter_count(concat_skip, 1) == decoder_parameter_count(add_skip, 1));
}

TEST_CASE("concat bridging widens the second encoder clusters, add does not") {
  const auto cfg = desk();
  const auto concat = build_bridged<float>(cfg, {Fusion::Concat, Fusion::None}, {});
  const auto add = build_bridged<float>(cfg, {Fusion::Add, Fusion::None}, {});
  const auto none = build_bridged<float>(cfg, {Fusion::None, Fusion::None}, {});
  const auto cc = second_encoder_b2_convs(concat, cluster_index_map(concat), cfg.depth);
  const auto ca = second_encoder_b2_convs(add, cluster_index_map(add), cfg.depth);
  const auto cn = second_encoder_b2_convs(none, cluster_index_map(none), cfg.depth);
  for (int l = 1; l < cfg.depth; ++l) {
    CHECK(in_channels(concat, cc[l]) > in_channels(add, ca[l]));
    CHECK(in_channels(add, ca[l]) == in_channels(none, cn[l]));
  }
}

TEST_CASE("add fusion between unequal widths fails at build time") {
  ModelGraph<float> g(FeatureShape{1, 8, 8});
  const auto a = g.conv2d(g.input(), 2, ops::Conv2dGeometry::same(3), "a");
  const auto b = g.conv2d(g.input(), 3, ops::Conv2dGeometry::same(3), "b");
  CHECK_THROWS_AS(g.add(a, b, "sum"), ShapeError);
  ModelSpec spec;
  spec.unet = desk();
  spec.bridge = {Fusion::Add, Fusion::None, BridgeTap::ConcatStage};
  CHECK_THROWS_AS(build_model<float>(spec), ConfigError);
}

TEST_CASE("concat-stage tap builds with concatenation bridging") {
  const auto g = build_bridged<float>(desk(), {Fusion::Concat, Fusion::Add, BridgeTap::ConcatStage}, {});
  CHECK_NOTHROW(g.audit());
  for (std::size_t i : cross_fusion_nodes(g)) {
    if (g.node(i).role != NodeRole::Bridge) continue;
    const auto& src = g.node(g.node(i).inputs[1]);
    CHECK(src.kind == OpKind::Concat);
    CHECK(src.subnet == 1);
  }
}

TEST_CASE("whole-graph channel audit passes for every builder output") {
  for (auto b : {Fusion::None, Fusion::Add, Fusion::Concat})
    for (auto s : {Fusion::None, Fusion::Add, Fusion::Concat}) {
      const auto g = build_bridged<float>(desk(3, 4, 32), {b, s}, {});
      CHECK_NOTHROW(g.audit());
    }
}

TEST_CASE("parameters come in a stable, named order") {
  const auto a = build_bridged<float>(desk(), {}, ActivationScheme::cluster3());
  const auto b = build_bridged<float>(desk(), {}, ActivationScheme::cluster3());
  REQUIRE(a.parameters().size() == b.parameters().size());
  std::set<std::string> names;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    CHECK(a.parameters()[i].name == b.parameters()[i].name);
    names.insert(a.parameters()[i].name);
  }
  CHECK(names.size() == a.parameters().size());
}
