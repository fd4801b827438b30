#pragma once

#include <random>

#include "aot/geometry.hpp"

namespace aot::test {

inline Vec3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const Vec3d v{n(rng), n(rng), n(rng)};
    if (norm(v) > 1e-6) return normalized(v);
  }
}

inline Mat3d random_rotation(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ang(0.0, kPi);
  return rotation_about(random_unit(rng), ang(rng));
}

inline Pose random_pose(std::mt19937_64& rng, double spread = 2.0) {
  std::uniform_real_distribution<double> t(-spread, spread);
  return {random_rotation(rng), {t(rng), t(rng), t(rng)}};
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace aot::test

#include <algorithm>
#include <limits>
#include <vector>

#include "aot/instance.hpp"
#include "aot/structure.hpp"

namespace aot::test {

// Smallest separation between competing branches of the max/min/abs
// expressions in F at a local point. Grad checks skip points where this is
// tiny because F is not differentiable there.
inline double primitive_branch_gap(Shape s, std::span<const double> p, const Vec3d& x) {
  double gap = std::numeric_limits<double>::infinity();
  switch (s) {
    case Shape::Cuboid: {
      std::array<double, 3> q{std::abs(x.x) - p[0], std::abs(x.y) - p[1], std::abs(x.z) - p[2]};
      std::sort(q.begin(), q.end());
      gap = q[2] - q[1];
      gap = std::min({gap, std::abs(x.x), std::abs(x.y), std::abs(x.z)});
      break;
    }
    case Shape::Cylinder: {
      const double rho = std::hypot(x.x, x.y);
      gap = std::min({std::abs((rho - p[0]) - (std::abs(x.z) - p[1])), std::abs(x.z), rho});
      break;
    }
    case Shape::Ring: gap = std::min(std::hypot(x.x, x.y), std::hypot(std::hypot(x.x, x.y) - p[0], x.z)); break;
    default: break;
  }
  return gap;
}

inline double branch_gap(Shape s, std::span<const double> p, const Vec3d& x) {
  if (is_primitive(s)) return primitive_branch_gap(s, p, x);
  double gap = std::numeric_limits<double>::infinity();
  std::vector<double> vals;
  for (std::size_t c = 0; c < child_count(s); ++c) {
    const ChildLayout lay = child_layout(s, c);
    const auto cp = child_params<double>(s, p, c);
    const Vec3d lx = child_frame<double>(s, p, c).apply_inverse(x);
    gap = std::min(gap, primitive_branch_gap(lay.shape, std::span<const double>(cp.data(), lay.count), lx));
    vals.push_back(primitive_structure<double>(lay.shape, std::span<const double>(cp.data(), lay.count), lx));
  }
  return std::min(gap, std::abs(vals[0] - vals[1]));
}

// Random in-bounds parameters in a moderate range for each geometric shape.
inline std::vector<double> random_params(Shape s, std::mt19937_64& rng) {
  switch (s) {
    case Shape::Cuboid: return {uniform(rng, 0.2, 1.0), uniform(rng, 0.2, 1.0), uniform(rng, 0.2, 1.0)};
    case Shape::Cylinder: return {uniform(rng, 0.1, 0.8), uniform(rng, 0.1, 1.0)};
    case Shape::Ring: {
      const double big = uniform(rng, 0.3, 1.0);
      return {big, uniform(rng, 0.05, 0.4) * big};
    }
    case Shape::Handle: {
      const double big = uniform(rng, 0.2, 0.6);
      return {big, uniform(rng, 0.1, 0.3) * big, uniform(rng, 0.1, 0.4)};
    }
    case Shape::Lever:
      return {uniform(rng, 0.3, 0.8), uniform(rng, 0.1, 0.3), uniform(rng, 0.05, 0.15), uniform(rng, 0.05, 0.1),
              uniform(rng, 0.05, 0.2)};
    default: return {};
  }
}

}  // namespace aot::test
