#include "bunet/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bunet/errors.hpp"

namespace bunet {

namespace {

// Bilinear sample with zero outside the grid.
float sample_bilinear(const Slice& s, double y, double x) {
  const double fy = std::floor(y);
  const double fx = std::floor(x);
  const double wy = y - fy;
  const double wx = x - fx;
  const auto y0 = static_cast<std::ptrdiff_t>(fy);
  const auto x0 = static_cast<std::ptrdiff_t>(fx);
  auto px = [&](std::ptrdiff_t yy, std::ptrdiff_t xx) -> double {
    if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(s.height) || xx >= static_cast<std::ptrdiff_t>(s.width)) {
      return 0.0;
    }
    return s.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
  };
  double v = 0.0;
  if ((1 - wy) * (1 - wx) != 0.0) v += (1 - wy) * (1 - wx) * px(y0, x0);
  if ((1 - wy) * wx != 0.0) v += (1 - wy) * wx * px(y0, x0 + 1);
  if (wy * (1 - wx) != 0.0) v += wy * (1 - wx) * px(y0 + 1, x0);
  if (wy * wx != 0.0) v += wy * wx * px(y0 + 1, x0 + 1);
  return static_cast<float>(v);
}

float sample_nearest(const Slice& s, double y, double x) {
  const auto yy = static_cast<std::ptrdiff_t>(std::floor(y + 0.5));
  const auto xx = static_cast<std::ptrdiff_t>(std::floor(x + 0.5));
  if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(s.height) || xx >= static_cast<std::ptrdiff_t>(s.width)) {
    return 0.0f;
  }
  return s.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
}

}  // namespace

Slice resize_bilinear(const Slice& s, std::size_t height, std::size_t width) {
  if (s.height == height && s.width == width) return s;
  Slice out(height, width);
  const double sy = static_cast<double>(s.height) / static_cast<double>(height);
  const double sx = static_cast<double>(s.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double src_y = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(s.height - 1));
    const auto y0 = static_cast<std::size_t>(src_y);
    const std::size_t y1 = std::min(y0 + 1, s.height - 1);
    const double wy = src_y - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double src_x = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(s.width - 1));
      const auto x0 = static_cast<std::size_t>(src_x);
      const std::size_t x1 = std::min(x0 + 1, s.width - 1);
      const double wx = src_x - static_cast<double>(x0);
      const double top = (1 - wx) * s.at(y0, x0) + wx * s.at(y0, x1);
      const double bottom = (1 - wx) * s.at(y1, x0) + wx * s.at(y1, x1);
      out.at(y, x) = static_cast<float>((1 - wy) * top + wy * bottom);
    }
  }
  return out;
}

Slice resize_nearest(const Slice& s, std::size_t height, std::size_t width) {
  if (s.height == height && s.width == width) return s;
  Slice out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t src_y = std::min(s.height - 1, (2 * y + 1) * s.height / (2 * height));
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t src_x = std::min(s.width - 1, (2 * x + 1) * s.width / (2 * width));
      out.at(y, x) = s.at(src_y, src_x);
    }
  }
  return out;
}

Slice resize_slice(const Slice& s, std::size_t target, Interpolation kind) {
  if (target < 8) throw ConfigError("resize target must be at least 8");
  if (s.height == 0 || s.width == 0) throw DataError("cannot resize an empty slice");
  return kind == Interpolation::Bilinear ? resize_bilinear(s, target, target) : resize_nearest(s, target, target);
}

void normalize_slice(Slice& s) {
  if (s.values.empty()) return;
  double sum = 0.0;
  for (float v : s.values) sum += v;
  const double mean = sum / static_cast<double>(s.values.size());
  double sq = 0.0;
  for (float v : s.values) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / static_cast<double>(s.values.size()));
  const double inv = sd > 1e-8 ? 1.0 / sd : 0.0;
  for (float& v : s.values) v = static_cast<float>((v - mean) * inv);
}

AugmentParams sample_augment(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentParams p;
  p.flip = unit(rng) < 0.5;
  p.angle_deg = -kMaxRotationDeg + 2.0 * kMaxRotationDeg * unit(rng);
  return p;
}

std::array<double, 2> source_coordinate(const AugmentParams& p, std::size_t height, std::size_t width, double y,
                                        double x) {
  const double cy = (static_cast<double>(height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(width) - 1.0) / 2.0;
  const double a = p.angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(a);
  const double s = std::sin(a);
  // Undo the rotation (image y axis points down, so this is a rotation by -a).
  const double dy = y - cy;
  const double dx = x - cx;
  double sy = cy + c * dy - s * dx;
  double sx = cx + s * dy + c * dx;
  if (p.angle_deg == 0.0) {
    sy = y;
    sx = x;
  }
  if (p.flip) sx = static_cast<double>(width) - 1.0 - sx;
  return {sy, sx};
}

SliceSample apply_augment(const SliceSample& sample, const AugmentParams& params) {
  SliceSample out = sample;
  const std::size_t h = sample.image.height;
  const std::size_t w = sample.image.width;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const auto [sy, sx] = source_coordinate(params, h, w, static_cast<double>(y), static_cast<double>(x));
      out.image.at(y, x) = sample_bilinear(sample.image, sy, sx);
      if (!sample.mask.values.empty()) out.mask.at(y, x) = sample_nearest(sample.mask, sy, sx);
    }
  }
  return out;
}

SliceSample augment(const SliceSample& sample, std::mt19937_64& rng) {
  return apply_augment(sample, sample_augment(rng));
}

}  // namespace bunet
