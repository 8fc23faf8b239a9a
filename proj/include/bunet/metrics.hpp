#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace bunet {

/// Voxel size in mm along (z, y, x).
struct Spacing {
  double z = 1.0;
  double y = 1.0;
  double x = 1.0;
  friend bool operator==(const Spacing&, const Spacing&) = default;
};

struct BinaryVolume {
  std::size_t depth = 0;   // slices (z)
  std::size_t height = 0;  // y
  std::size_t width = 0;   // x
  std::vector<std::uint8_t> voxels;  // z-major, values 0 or 1
  Spacing spacing;

  BinaryVolume() = default;
  BinaryVolume(std::size_t d, std::size_t h, std::size_t w, Spacing s = {});

  std::size_t size() const { return voxels.size(); }
  std::size_t index(std::size_t z, std::size_t y, std::size_t x) const { return (z * height + y) * width + x; }
  std::uint8_t at(std::size_t z, std::size_t y, std::size_t x) const { return voxels[index(z, y, x)]; }
  std::uint8_t& at(std::size_t z, std::size_t y, std::size_t x) { return voxels[index(z, y, x)]; }
  std::size_t count() const;
  double voxel_volume() const { return spacing.z * spacing.y * spacing.x; }
  bool same_grid(const BinaryVolume& o) const { return depth == o.depth && height == o.height && width == o.width; }
  /// Throws DataError for non-binary voxels, size mismatch or spacing <= 0.
  void validate() const;
};

using Voxel = std::array<std::size_t, 3>;  // (z, y, x)

/// 2|GS n SEG| / (|GS| + |SEG|); two empty volumes score 1.
double vdsc(const BinaryVolume& gs, const BinaryVolume& seg);

/// Foreground voxels with at least one background 6-neighbour; outside the
/// volume counts as background. Returned in z-major scan order.
std::vector<Voxel> boundary_voxels(const BinaryVolume& v);

/// Distances (mm) from every boundary voxel of `from` to the nearest boundary
/// voxel of `to`, in boundary scan order.
std::vector<double> directed_surface_distances(const BinaryVolume& from, const BinaryVolume& to);

/// Symmetric Hausdorff distance in mm between the boundaries. `percentile`
/// 100 gives the exact maximum; smaller values take the nearest-rank
/// percentile of the pooled directed distances (95 is the PROMISE12
/// convention). Throws MetricUndefined if either volume is empty.
double hausdorff(const BinaryVolume& gs, const BinaryVolume& seg, double percentile = 100.0);

/// Average of the two directed mean boundary distances, in mm.
double abd(const BinaryVolume& gs, const BinaryVolume& seg);

/// 100 * | |SEG| - |GS| | / |GS| with spacing-weighted volumes (percent).
double ravd(const BinaryVolume& gs, const BinaryVolume& seg);

}  // namespace bunet
