#pragma once
// Straightforward reference implementations used to check the optimized code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "bunet/metrics.hpp"
#include "bunet/ops.hpp"
#include "bunet/tensor.hpp"

namespace oracle {

using bunet::Shape;
using bunet::TensorD;

// Direct 7-loop convolution.
inline TensorD conv2d(const TensorD& in, const TensorD& k, const std::vector<double>& bias,
                      const bunet::ops::Conv2dGeometry& g) {
  const Shape s = in.shape();
  const std::size_t oh = (s.h + g.pad_top + g.pad_bottom - g.kernel_h) / g.stride + 1;
  const std::size_t ow = (s.w + g.pad_left + g.pad_right - g.kernel_w) / g.stride + 1;
  TensorD out(Shape{s.n, k.shape().n, oh, ow});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t o = 0; o < k.shape().n; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t i = 0; i < g.kernel_h; ++i)
              for (std::size_t j = 0; j < g.kernel_w; ++j) {
                const auto iy = static_cast<std::ptrdiff_t>(y * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad_top);
                const auto ix = static_cast<std::ptrdiff_t>(x * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad_left);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(s.h) || ix >= static_cast<std::ptrdiff_t>(s.w))
                  continue;
                acc += in.at(n, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) * k.at(o, c, i, j);
              }
          out.at(n, o, y, x) = acc;
        }
  return out;
}

inline TensorD max_pool2(const TensorD& in) {
  const Shape s = in.shape();
  TensorD out(Shape{s.n, s.c, s.h / 2, s.w / 2});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < s.h / 2; ++y)
        for (std::size_t x = 0; x < s.w / 2; ++x) {
          double m = -std::numeric_limits<double>::infinity();
          for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 2; ++j) m = std::max(m, in.at(n, c, 2 * y + i, 2 * x + j));
          out.at(n, c, y, x) = m;
        }
  return out;
}

inline TensorD upsample2(const TensorD& in) {
  const Shape s = in.shape();
  TensorD out(Shape{s.n, s.c, 2 * s.h, 2 * s.w});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < 2 * s.h; ++y)
        for (std::size_t x = 0; x < 2 * s.w; ++x) out.at(n, c, y, x) = in.at(n, c, y / 2, x / 2);
  return out;
}

// Boundary by explicit neighbour test, coordinates as doubles in mm.
struct P {
  double z, y, x;
};

inline bool fg(const bunet::BinaryVolume& v, long z, long y, long x) {
  if (z < 0 || y < 0 || x < 0 || z >= static_cast<long>(v.depth) || y >= static_cast<long>(v.height) ||
      x >= static_cast<long>(v.width))
    return false;
  return v.at(static_cast<std::size_t>(z), static_cast<std::size_t>(y), static_cast<std::size_t>(x)) == 1;
}

inline std::vector<P> boundary_mm(const bunet::BinaryVolume& v, const bunet::Spacing& s) {
  std::vector<P> out;
  for (long z = 0; z < static_cast<long>(v.depth); ++z)
    for (long y = 0; y < static_cast<long>(v.height); ++y)
      for (long x = 0; x < static_cast<long>(v.width); ++x) {
        if (!fg(v, z, y, x)) continue;
        const int n = fg(v, z - 1, y, x) + fg(v, z + 1, y, x) + fg(v, z, y - 1, x) + fg(v, z, y + 1, x) +
                      fg(v, z, y, x - 1) + fg(v, z, y, x + 1);
        if (n < 6) out.push_back({z * s.z, y * s.y, x * s.x});
      }
  return out;
}

// All-pairs directed distances.
inline std::vector<double> directed(const std::vector<P>& a, const std::vector<P>& b) {
  std::vector<double> out;
  for (const auto& p : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b) {
      const double dz = p.z - q.z, dy = p.y - q.y, dx = p.x - q.x;
      best = std::min(best, dz * dz + dy * dy + dx * dx);
    }
    out.push_back(std::sqrt(best));
  }
  return out;
}

inline double hausdorff(const bunet::BinaryVolume& a, const bunet::BinaryVolume& b) {
  const auto pa = boundary_mm(a, a.spacing);
  const auto pb = boundary_mm(b, a.spacing);
  const auto d1 = directed(pa, pb);
  const auto d2 = directed(pb, pa);
  return std::max(*std::max_element(d1.begin(), d1.end()), *std::max_element(d2.begin(), d2.end()));
}

inline double abd(const bunet::BinaryVolume& a, const bunet::BinaryVolume& b) {
  const auto pa = boundary_mm(a, a.spacing);
  const auto pb = boundary_mm(b, a.spacing);
  const auto d1 = directed(pa, pb);
  const auto d2 = directed(pb, pa);
  double s1 = 0, s2 = 0;
  for (double d : d1) s1 += d;
  for (double d : d2) s2 += d;
  return 0.5 * (s1 / static_cast<double>(d1.size()) + s2 / static_cast<double>(d2.size()));
}

// Random blob volume: union of a few boxes plus salt noise.
inline bunet::BinaryVolume random_volume(std::mt19937_64& rng, std::size_t d, std::size_t h, std::size_t w) {
  bunet::BinaryVolume v(d, h, w);
  std::uniform_int_distribution<std::size_t> zd(0, d - 1), yd(0, h - 1), xd(0, w - 1);
  std::uniform_real_distribution<double> u(0, 1);
  const int boxes = 1 + static_cast<int>(u(rng) * 3);
  for (int b = 0; b < boxes; ++b) {
    std::size_t z0 = zd(rng), z1 = zd(rng), y0 = yd(rng), y1 = yd(rng), x0 = xd(rng), x1 = xd(rng);
    if (z0 > z1) std::swap(z0, z1);
    if (y0 > y1) std::swap(y0, y1);
    if (x0 > x1) std::swap(x0, x1);
    for (std::size_t z = z0; z <= z1; ++z)
      for (std::size_t y = y0; y <= y1; ++y)
        for (std::size_t x = x0; x <= x1; ++x) v.at(z, y, x) = 1;
  }
  for (auto& vox : v.voxels)
    if (u(rng) < 0.01) vox = 1;
  return v;
}

// Central difference of f at x[i].
inline double central_difference(const std::function<double()>& f, double& xi, double h) {
  const double old = xi;
  xi = old + h;
  const double fp = f();
  xi = old - h;
  const double fm = f();
  xi = old;
  return (fp - fm) / (2.0 * h);
}

inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline TensorD random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  TensorD t(s);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Values bounded away from 0 by `gap` (keeps ReLU/ELU kinks out of reach).
inline TensorD away_from_zero(Shape s, std::mt19937_64& rng, double gap = 0.05) {
  std::uniform_real_distribution<double> u(gap, 1.0);
  std::bernoulli_distribution sign(0.5);
  TensorD t(s);
  for (auto& v : t.values()) v = sign(rng) ? u(rng) : -u(rng);
  return t;
}

// Distinct values: a shuffled ramp with spacing `step` plus offset.
inline TensorD distinct_values(Shape s, std::mt19937_64& rng, double step = 0.01) {
  TensorD t(s);
  std::vector<std::size_t> idx(t.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  for (std::size_t i = 0; i < idx.size(); ++i) t[idx[i]] = static_cast<double>(i) * step - 1.0;
  return t;
}

}  // namespace oracle
