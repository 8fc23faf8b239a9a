#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bunet/metrics.hpp"

namespace bunet {

enum class ElementType { UInt8, Int8, Int16, UInt16, Float32 };

std::string_view to_string(ElementType t);  // MET_* spelling
std::size_t element_size(ElementType t);

/// MetaImage header. DimSize is stored in the file as (x, y, z); here the
/// axes are kept as depth (z), height (y), width (x).
struct MhdHeader {
  std::size_t depth = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  ElementType element_type = ElementType::Int16;
  Spacing spacing;
  std::string data_file;
  bool msb = false;
  /// Keys this reader does not interpret, in file order.
  std::vector<std::pair<std::string, std::string>> extra;

  std::size_t voxel_count() const { return depth * height * width; }
  friend bool operator==(const MhdHeader&, const MhdHeader&) = default;
};

/// Parses `Key = Value` lines. Requires NDims (= 3), DimSize, ElementType
/// and ElementDataFile; ElementSpacing defaults to 1. Never crashes on
/// arbitrary input: failures throw MhdParseError naming the key.
MhdHeader parse_mhd(std::string_view header_text);

/// Serializes a header; ElementDataFile is written last.
std::string write_mhd(const MhdHeader& header);

struct VolumeRecord {
  std::string case_id;
  std::size_t depth = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> image;  // z-major
  Spacing spacing;
  std::optional<BinaryVolume> mask;

  std::span<const float> slice(std::size_t z) const {
    return std::span<const float>(image).subspan(z * height * width, height * width);
  }
};

/// Decodes `.mhd` + raw data. Throws DataError (corrupt file) when the raw
/// byte count differs from the header's voxel count times element size.
VolumeRecord load_volume(const std::filesystem::path& mhd_path);

/// Loads a label volume; any non-zero voxel becomes foreground.
BinaryVolume load_mask(const std::filesystem::path& mhd_path);

/// Writes `<path>` and a sibling `.raw` (little-endian).
void save_volume(const std::filesystem::path& mhd_path, std::size_t depth, std::size_t height, std::size_t width,
                 std::span<const float> values, const Spacing& spacing, ElementType type = ElementType::Float32);

void save_mask(const std::filesystem::path& mhd_path, const BinaryVolume& mask);

}  // namespace bunet
