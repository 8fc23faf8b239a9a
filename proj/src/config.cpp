#include "bunet/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "bunet/errors.hpp"

namespace bunet {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int to_int(std::string_view key, std::string_view v) {
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError("invalid integer for " + std::string(key) + ": '" + std::string(v) + "'");
  }
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError("invalid number for " + std::string(key) + ": '" + std::string(v) + "'");
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  loss.validate();
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  const auto& x = a.model;
  const auto& y = b.model;
  return x.architecture == y.architecture && x.unet.depth == y.unet.depth &&
         x.unet.base_channels == y.unet.base_channels && x.unet.input_size == y.unet.input_size &&
         x.unet.in_channels == y.unet.in_channels && x.unet.out_channels == y.unet.out_channels &&
         x.bridge == y.bridge && x.scheme == y.scheme && a.loss.kind == b.loss.kind && a.loss.q == b.loss.q &&
         a.loss.smooth == b.loss.smooth;
}

RunConfig desk_defaults() {
  RunConfig c;
  c.model.unet.depth = 4;
  c.model.unet.base_channels = 8;
  c.model.unet.input_size = 64;
  return c;
}

RunConfig paper_scale() {
  RunConfig c = desk_defaults();
  c.model.unet.base_channels = 32;
  c.model.unet.input_size = 256;
  return c;
}

void apply_config_key(RunConfig& c, std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "architecture") {
    c.model.architecture = parse_architecture(value);
  } else if (key == "depth") {
    c.model.unet.depth = to_int(key, value);
  } else if (key == "base_channels") {
    c.model.unet.base_channels = to_int(key, value);
  } else if (key == "input_size") {
    c.model.unet.input_size = to_int(key, value);
  } else if (key == "bridging") {
    c.model.bridge.bridging = parse_fusion(value);
  } else if (key == "skip") {
    c.model.bridge.skip = parse_fusion(value);
  } else if (key == "bridge_tap") {
    c.model.bridge.tap = parse_bridge_tap(value);
  } else if (key == "relu_clusters") {
    const double alpha = c.model.scheme.alpha;
    c.model.scheme = ActivationScheme::from_list(value);
    c.model.scheme.alpha = alpha;
  } else if (key == "activation") {
    const double alpha = c.model.scheme.alpha;
    c.model.scheme = ActivationScheme::preset(value);
    c.model.scheme.alpha = alpha;
  } else if (key == "alpha") {
    c.model.scheme.alpha = to_double(key, value);
  } else if (key == "loss") {
    c.loss.kind = parse_loss_kind(value);
  } else if (key == "q") {
    c.loss.q = to_double(key, value);
  } else if (key == "smooth") {
    c.loss.smooth = to_double(key, value);
  } else {
    throw ConfigError("unknown configuration key '" + std::string(key) + "'");
  }
}

std::string to_config_text(const RunConfig& c) {
  std::ostringstream os;
  os << "architecture = " << to_string(c.model.architecture) << '\n'
     << "depth = " << c.model.unet.depth << '\n'
     << "base_channels = " << c.model.unet.base_channels << '\n'
     << "input_size = " << c.model.unet.input_size << '\n'
     << "bridging = " << to_string(c.model.bridge.bridging) << '\n'
     << "skip = " << to_string(c.model.bridge.skip) << '\n'
     << "bridge_tap = " << to_string(c.model.bridge.tap) << '\n'
     << "relu_clusters = " << c.model.scheme.to_list() << '\n'
     << "alpha = " << fmt(c.model.scheme.alpha) << '\n'
     << "loss = " << to_string(c.loss.kind) << '\n'
     << "q = " << fmt(c.loss.q) << '\n'
     << "smooth = " << fmt(c.loss.smooth) << '\n';
  return os.str();
}

RunConfig parse_config_text(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("configuration line " + std::to_string(line_no) + " is not 'key = value'");
    }
    apply_config_key(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read configuration file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

}  // namespace bunet
