#pragma once

#include <filesystem>

#include "bunet/config.hpp"
#include "bunet/graph.hpp"

namespace bunet {

/// A trained network together with the configuration that built it.
struct Checkpoint {
  RunConfig config;
  ModelGraph<float> graph;
};

/// Binary layout: "BUNETCKP", u32 version, u32 config length, config text,
/// u32 parameter count, then per parameter: u32 name length, name, 4 x u64
/// dims, float32 values (little-endian). Running batch-norm statistics are
/// included. The file is written to a temporary sibling and renamed, so a
/// failed write leaves any previous checkpoint intact.
void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const ModelGraph<float>& graph);

/// Rebuilds the network from the stored configuration and restores every
/// parameter. Throws DataError for malformed or mismatched files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bunet
