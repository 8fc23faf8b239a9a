#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

namespace bunet {

/// Single-channel 2D image, row-major.
struct Slice {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;

  Slice() = default;
  Slice(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), values(h * w, fill) {}

  float& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  float at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  friend bool operator==(const Slice&, const Slice&) = default;
};

/// One training example: normalized image plus binary mask of equal size.
struct SliceSample {
  Slice image;
  Slice mask;
  std::string source_case;
  std::size_t slice_index = 0;
};

/// Half-pixel-centre bilinear resampling (same-size resize is the identity).
Slice resize_bilinear(const Slice& s, std::size_t height, std::size_t width);
/// Nearest-neighbour resampling; preserves the value set (masks stay binary).
Slice resize_nearest(const Slice& s, std::size_t height, std::size_t width);

enum class Interpolation { Bilinear, Nearest };

/// Square resize to `target` (>= 8), without aspect preservation.
Slice resize_slice(const Slice& s, std::size_t target, Interpolation kind);

/// Zero mean, unit variance. A constant slice becomes all zeros (its
/// standard deviation is clamped rather than divided by).
void normalize_slice(Slice& s);

struct AugmentParams {
  bool flip = false;         // horizontal mirror, applied before rotation
  double angle_deg = 0.0;    // counter-clockwise rotation about the centre
};

inline constexpr double kMaxRotationDeg = 10.0;

/// Flip with probability 1/2, angle uniform in [-10, 10] degrees.
AugmentParams sample_augment(std::mt19937_64& rng);

/// Input-image coordinate (y, x) that output pixel (y, x) samples from.
std::array<double, 2> source_coordinate(const AugmentParams& p, std::size_t height, std::size_t width, double y,
                                        double x);

/// Applies the same geometric transform to image (bilinear) and mask
/// (nearest); pixels mapping outside the input are 0.
SliceSample apply_augment(const SliceSample& sample, const AugmentParams& params);

SliceSample augment(const SliceSample& sample, std::mt19937_64& rng);

}  // namespace bunet
