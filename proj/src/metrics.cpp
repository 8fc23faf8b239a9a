#include "bunet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bunet/errors.hpp"

namespace bunet {

BinaryVolume::BinaryVolume(std::size_t d, std::size_t h, std::size_t w, Spacing s)
    : depth(d), height(h), width(w), voxels(d * h * w, 0), spacing(s) {}

std::size_t BinaryVolume::count() const {
  return static_cast<std::size_t>(std::count(voxels.begin(), voxels.end(), std::uint8_t{1}));
}

void BinaryVolume::validate() const {
  if (voxels.size() != depth * height * width) throw DataError("binary volume size does not match its dimensions");
  if (!(spacing.z > 0 && spacing.y > 0 && spacing.x > 0)) throw DataError("voxel spacing must be positive");
  for (std::uint8_t v : voxels) {
    if (v > 1) throw DataError("binary volume contains a value other than 0 or 1");
  }
}

namespace {

void require_same_grid(const BinaryVolume& a, const BinaryVolume& b) {
  if (!a.same_grid(b)) throw DataError("volumes have different dimensions");
}

struct Point {
  double z, y, x;
};

inline double squared_distance(const Point& a, const Point& b) {
  const double dz = a.z - b.z;
  const double dy = a.y - b.y;
  const double dx = a.x - b.x;
  return dz * dz + dy * dy + dx * dx;
}

std::vector<Point> to_mm(const std::vector<Voxel>& voxels, const Spacing& s) {
  std::vector<Point> out;
  out.reserve(voxels.size());
  for (const auto& v : voxels) {
    out.push_back({static_cast<double>(v[0]) * s.z, static_cast<double>(v[1]) * s.y, static_cast<double>(v[2]) * s.x});
  }
  return out;
}

// Static 3-d tree over boundary points; exact nearest-neighbour queries.
class KdTree {
 public:
  explicit KdTree(std::vector<Point> pts) : pts_(std::move(pts)), idx_(pts_.size()) {
    std::iota(idx_.begin(), idx_.end(), std::size_t{0});
    build(0, idx_.size(), 0);
  }

  double nearest_squared(const Point& q) const {
    double best = std::numeric_limits<double>::infinity();
    search(0, idx_.size(), 0, q, best);
    return best;
  }

 private:
  static double coord(const Point& p, int axis) { return axis == 0 ? p.z : (axis == 1 ? p.y : p.x); }

  void build(std::size_t lo, std::size_t hi, int axis) {
    if (hi - lo <= 1) return;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(idx_.begin() + static_cast<std::ptrdiff_t>(lo), idx_.begin() + static_cast<std::ptrdiff_t>(mid),
                     idx_.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::size_t a, std::size_t b) {
                       return coord(pts_[a], axis) < coord(pts_[b], axis);
                     });
    build(lo, mid, (axis + 1) % 3);
    build(mid + 1, hi, (axis + 1) % 3);
  }

  void search(std::size_t lo, std::size_t hi, int axis, const Point& q, double& best) const {
    if (lo >= hi) return;
    const std::size_t mid = lo + (hi - lo) / 2;
    const Point& p = pts_[idx_[mid]];
    best = std::min(best, squared_distance(q, p));
    const double diff = coord(q, axis) - coord(p, axis);
    const int next = (axis + 1) % 3;
    // Slack covers rounding between the plane distance and point distances,
    // so the result equals a brute-force minimum bit for bit.
    if (diff < 0) {
      search(lo, mid, next, q, best);
      if (diff * diff <= best * (1.0 + 1e-9)) search(mid + 1, hi, next, q, best);
    } else {
      search(mid + 1, hi, next, q, best);
      if (diff * diff <= best * (1.0 + 1e-9)) search(lo, mid, next, q, best);
    }
  }

  std::vector<Point> pts_;
  std::vector<std::size_t> idx_;
};

void require_nonempty(const BinaryVolume& gs, const BinaryVolume& seg, const char* metric) {
  if (gs.count() == 0 || seg.count() == 0) {
    throw MetricUndefined(std::string(metric) + " is undefined for an empty volume");
  }
}

}  // namespace

double vdsc(const BinaryVolume& gs, const BinaryVolume& seg) {
  require_same_grid(gs, seg);
  std::size_t inter = 0;
  std::size_t a = 0;
  std::size_t b = 0;
  for (std::size_t i = 0; i < gs.voxels.size(); ++i) {
    a += gs.voxels[i];
    b += seg.voxels[i];
    inter += gs.voxels[i] & seg.voxels[i];
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

std::vector<Voxel> boundary_voxels(const BinaryVolume& v) {
  std::vector<Voxel> out;
  auto fg = [&](std::ptrdiff_t z, std::ptrdiff_t y, std::ptrdiff_t x) {
    if (z < 0 || y < 0 || x < 0 || z >= static_cast<std::ptrdiff_t>(v.depth) ||
        y >= static_cast<std::ptrdiff_t>(v.height) || x >= static_cast<std::ptrdiff_t>(v.width)) {
      return false;
    }
    return v.at(static_cast<std::size_t>(z), static_cast<std::size_t>(y), static_cast<std::size_t>(x)) != 0;
  };
  for (std::size_t z = 0; z < v.depth; ++z) {
    for (std::size_t y = 0; y < v.height; ++y) {
      for (std::size_t x = 0; x < v.width; ++x) {
        if (!v.at(z, y, x)) continue;
        const auto zi = static_cast<std::ptrdiff_t>(z);
        const auto yi = static_cast<std::ptrdiff_t>(y);
        const auto xi = static_cast<std::ptrdiff_t>(x);
        const bool interior = fg(zi - 1, yi, xi) && fg(zi + 1, yi, xi) && fg(zi, yi - 1, xi) && fg(zi, yi + 1, xi) &&
                              fg(zi, yi, xi - 1) && fg(zi, yi, xi + 1);
        if (!interior) out.push_back({z, y, x});
      }
    }
  }
  return out;
}

namespace {
std::vector<double> directed(const BinaryVolume& from, const BinaryVolume& to, const Spacing& spacing) {
  const std::vector<Point> src = to_mm(boundary_voxels(from), spacing);
  const KdTree tree(to_mm(boundary_voxels(to), spacing));
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = std::sqrt(tree.nearest_squared(src[i]));
  return out;
}
}  // namespace

std::vector<double> directed_surface_distances(const BinaryVolume& from, const BinaryVolume& to) {
  require_same_grid(from, to);
  require_nonempty(from, to, "surface distance");
  return directed(from, to, from.spacing);
}

double hausdorff(const BinaryVolume& gs, const BinaryVolume& seg, double percentile) {
  require_same_grid(gs, seg);
  require_nonempty(gs, seg, "Hausdorff distance");
  if (!(percentile > 0.0 && percentile <= 100.0)) throw ConfigError("Hausdorff percentile must be in (0, 100]");
  std::vector<double> d = directed(gs, seg, gs.spacing);
  const std::vector<double> back = directed(seg, gs, gs.spacing);
  if (percentile >= 100.0) {
    const double a = *std::max_element(d.begin(), d.end());
    const double b = *std::max_element(back.begin(), back.end());
    return std::max(a, b);
  }
  d.insert(d.end(), back.begin(), back.end());
  std::sort(d.begin(), d.end());
  const auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * static_cast<double>(d.size())));
  return d[std::clamp<std::size_t>(rank, 1, d.size()) - 1];
}

double abd(const BinaryVolume& gs, const BinaryVolume& seg) {
  require_same_grid(gs, seg);
  require_nonempty(gs, seg, "average boundary distance");
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  return 0.5 * (mean(directed(gs, seg, gs.spacing)) + mean(directed(seg, gs, gs.spacing)));
}

double ravd(const BinaryVolume& gs, const BinaryVolume& seg) {
  require_same_grid(gs, seg);
  const double vg = static_cast<double>(gs.count()) * gs.voxel_volume();
  if (vg == 0.0) throw MetricUndefined("RAVD is undefined for an empty reference volume");
  const double vs = static_cast<double>(seg.count()) * gs.voxel_volume();
  return 100.0 * std::abs(vs - vg) / vg;
}

}  // namespace bunet
