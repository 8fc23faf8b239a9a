#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bunet/activations.hpp"
#include "bunet/dataset.hpp"
#include "bunet/errors.hpp"
#include "bunet/fusion.hpp"
#include "bunet/losses.hpp"
#include "bunet/metrics.hpp"
#include "bunet/mhd.hpp"
#include "bunet/unet.hpp"

namespace py = pybind11;
using namespace bunet;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::span<const double> view(const Array& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }

BinaryVolume to_volume(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a,
                       std::tuple<double, double, double> spacing) {
  if (a.ndim() != 3) throw DataError("expected a 3-d (z, y, x) array");
  BinaryVolume v(a.shape(0), a.shape(1), a.shape(2),
                 {std::get<0>(spacing), std::get<1>(spacing), std::get<2>(spacing)});
  std::copy(a.data(), a.data() + a.size(), v.voxels.begin());
  for (auto& x : v.voxels) x = x ? 1 : 0;
  return v;
}

py::array_t<float> slice_array(const Slice& s) {
  py::array_t<float> out({s.height, s.width});
  std::copy(s.values.begin(), s.values.end(), out.mutable_data());
  return out;
}

ModelSpec make_spec(const std::string& architecture, int depth, int base, int size, const std::string& scheme,
                    const std::string& bridging, const std::string& skip) {
  ModelSpec spec;
  spec.architecture = parse_architecture(architecture);
  spec.unet.depth = depth;
  spec.unet.base_channels = base;
  spec.unet.input_size = size;
  spec.scheme = ActivationScheme::preset(scheme);
  spec.bridge.bridging = parse_fusion(bridging);
  spec.bridge.skip = parse_fusion(skip);
  spec.validate();
  return spec;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bridged U-net core operations";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<MetricUndefined>(m, "MetricUndefined", PyExc_ValueError);

  m.def("soft_dsc", [](const Array& p, const Array& g, double smooth) { return soft_dsc<double>(view(p), view(g), smooth); },
        py::arg("pred"), py::arg("mask"), py::arg("smooth") = 1e-5);
  m.def("dice_loss", [](const Array& p, const Array& g, double smooth) { return dice_loss<double>(view(p), view(g), smooth); },
        py::arg("pred"), py::arg("mask"), py::arg("smooth") = 1e-5);
  m.def("cos_dice_loss",
        [](const Array& p, const Array& g, double q, double smooth) {
          return cos_dice_loss<double>(view(p), view(g), q, smooth);
        },
        py::arg("pred"), py::arg("mask"), py::arg("q") = 1.7, py::arg("smooth") = 1e-5);
  m.def("loss_gradient",
        [](const Array& p, const Array& g, const std::string& kind, double q, double smooth) {
          LossConfig c{parse_loss_kind(kind), q, smooth};
          c.validate();
          if (p.size() != g.size()) throw DataError("pred and mask sizes differ");
          py::array_t<double> grad(p.request().shape);
          const auto r = evaluate_loss<double>(c, view(p), view(g),
                                               std::span<double>(grad.mutable_data(), static_cast<std::size_t>(grad.size())));
          return py::make_tuple(r.loss, r.dsc, grad);
        },
        py::arg("pred"), py::arg("mask"), py::arg("kind") = "cosdice", py::arg("q") = 1.7, py::arg("smooth") = 1e-5);
  m.def("cos_dice_from_dsc", &cos_dice_from_dsc, py::arg("dsc"), py::arg("q"));
  m.def("cos_dice_weight", &cos_dice_weight, py::arg("dsc"), py::arg("q"));

  m.def("fusion_variance",
        [](const std::string& method, std::size_t n, double sigma, std::uint64_t seed) {
          FusionExperiment e;
          e.method = parse_fusion(method);
          e.sample_count = n;
          e.sigma = sigma;
          e.seed = seed;
          e.validate();
          const auto r = simulate_fusion_variance(e);
          return py::dict(py::arg("variance") = r.variance, py::arg("expected") = r.expected,
                          py::arg("standard_error") = r.standard_error, py::arg("fused_count") = r.fused_count);
        },
        py::arg("method"), py::arg("n") = 1'000'000, py::arg("sigma") = 1.0, py::arg("seed") = 7);

  const auto unit = std::make_tuple(1.0, 1.0, 1.0);
  m.def("vdsc", [](py::array_t<std::uint8_t> gs, py::array_t<std::uint8_t> seg) {
    return vdsc(to_volume(gs, {1, 1, 1}), to_volume(seg, {1, 1, 1}));
  });
  m.def("hausdorff",
        [](py::array_t<std::uint8_t> gs, py::array_t<std::uint8_t> seg, std::tuple<double, double, double> s,
           double percentile) { return hausdorff(to_volume(gs, s), to_volume(seg, s), percentile); },
        py::arg("gs"), py::arg("seg"), py::arg("spacing") = unit, py::arg("percentile") = 100.0);
  m.def("abd",
        [](py::array_t<std::uint8_t> gs, py::array_t<std::uint8_t> seg, std::tuple<double, double, double> s) {
          return abd(to_volume(gs, s), to_volume(seg, s));
        },
        py::arg("gs"), py::arg("seg"), py::arg("spacing") = unit);
  m.def("ravd",
        [](py::array_t<std::uint8_t> gs, py::array_t<std::uint8_t> seg, std::tuple<double, double, double> s) {
          return ravd(to_volume(gs, s), to_volume(seg, s));
        },
        py::arg("gs"), py::arg("seg"), py::arg("spacing") = unit);

  m.def("parse_mhd", [](const std::string& text) {
    const MhdHeader h = parse_mhd(text);
    return py::dict(py::arg("shape") = py::make_tuple(h.depth, h.height, h.width),
                    py::arg("element_type") = std::string(to_string(h.element_type)),
                    py::arg("spacing") = py::make_tuple(h.spacing.z, h.spacing.y, h.spacing.x),
                    py::arg("data_file") = h.data_file, py::arg("msb") = h.msb);
  });

  m.def("gen_synthetic",
        [](std::size_t count, std::size_t size, std::uint64_t seed) {
          py::list out;
          for (const auto& s : gen_synthetic(count, size, seed)) out.append(py::make_tuple(slice_array(s.image), slice_array(s.mask)));
          return out;
        },
        py::arg("count"), py::arg("size") = 64, py::arg("seed") = 7);

  m.def("model_summary",
        [](const std::string& architecture, int depth, int base, int size, const std::string& scheme,
           const std::string& bridging, const std::string& skip) {
          const auto g = build_model<float>(make_spec(architecture, depth, base, size, scheme, bridging, skip));
          const auto map = cluster_index_map(g);
          py::list layers;
          for (const auto& l : map.layers) {
            layers.append(py::make_tuple(l.layer, l.cluster, l.activation == OpKind::Relu ? "relu" : "elu"));
          }
          return py::dict(py::arg("parameters") = g.parameter_count(), py::arg("clusters") = map.cluster_count,
                          py::arg("relu_clusters") = map.relu_clusters(), py::arg("layers") = layers);
        },
        py::arg("architecture") = "stacked", py::arg("depth") = 4, py::arg("base") = 8, py::arg("size") = 64,
        py::arg("scheme") = "cluster3", py::arg("bridging") = "concat", py::arg("skip") = "add");
}
