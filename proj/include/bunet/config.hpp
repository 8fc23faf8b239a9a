#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "bunet/losses.hpp"
#include "bunet/unet.hpp"

namespace bunet {

/// Model and loss settings, stored as `key = value` text. Keys:
/// architecture, depth, base_channels, input_size, bridging, skip,
/// bridge_tap, relu_clusters, alpha, loss, q, smooth.
struct RunConfig {
  ModelSpec model;
  LossConfig loss;

  void validate() const;
  friend bool operator==(const RunConfig& a, const RunConfig& b);
};

/// Desk defaults: bridged, depth 4, base 8, 64x64, cluster3, cos-dice Q=1.7.
RunConfig desk_defaults();
/// Paper-sized model: base 32, 256x256.
RunConfig paper_scale();

std::string to_config_text(const RunConfig& config);

/// Applies the keys present in `text` on top of `base`. Blank lines and
/// `#` comments are ignored; unknown keys and bad values throw ConfigError.
RunConfig parse_config_text(std::string_view text, RunConfig base = desk_defaults());

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = desk_defaults());

/// Sets one key; shared by the file parser and command-line overrides.
void apply_config_key(RunConfig& config, std::string_view key, std::string_view value);

}  // namespace bunet
