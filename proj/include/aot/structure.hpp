#pragma once

// Closed-form structure of the geometric templates, written once over a
// generic scalar so the same code runs on double and on Dual<N>.
//
//   cuboid    F = max(|x| - a, |y| - b, |z| - c)
//   cylinder  F = max(sqrt(x^2 + y^2) - r, |z| - h)
//   ring      F = sqrt((sqrt(x^2 + y^2) - R)^2 + z^2) - r_tube
//
// F is negative inside, zero on the surface, positive outside. Composites are
// the union (min) of their children, each placed by a parameter-dependent
// child frame.

#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <utility>

#include "aot/errors.hpp"
#include "aot/geometry.hpp"
#include "aot/templates.hpp"

namespace aot {

namespace detail {

// sqrt(x^2 + y^2) with a finite derivative on the z axis.
template <class T>
T radial(const T& x, const T& y) {
  using std::sqrt;
  return sqrt(x * x + y * y + T(1e-30));
}

template <class T>
T sq(const T& v) { return v * v; }

template <class T>
T positive_part(const T& v) { return v < T(0) ? T(0) : v; }

}  // namespace detail

template <class T>
T cuboid_structure(std::span<const T> p, const Vec3<T>& x) {
  using std::abs;
  using std::max;
  return max(max(abs(x.x) - p[0], abs(x.y) - p[1]), abs(x.z) - p[2]);
}

template <class T>
T cylinder_structure(std::span<const T> p, const Vec3<T>& x) {
  using std::abs;
  using std::max;
  return max(detail::radial(x.x, x.y) - p[0], abs(x.z) - p[1]);
}

template <class T>
T ring_structure(std::span<const T> p, const Vec3<T>& x) {
  using std::sqrt;
  const T rho = detail::radial(x.x, x.y) - p[0];
  return sqrt(rho * rho + x.z * x.z + T(1e-30)) - p[1];
}

// Squared Euclidean distance from a local point to the primitive surface.
template <class T>
T cuboid_sq_distance(std::span<const T> p, const Vec3<T>& x) {
  using std::abs;
  using std::max;
  const T qx = abs(x.x) - p[0], qy = abs(x.y) - p[1], qz = abs(x.z) - p[2];
  const T m = max(max(qx, qy), qz);
  if (m <= T(0)) return m * m;
  return detail::sq(detail::positive_part(qx)) + detail::sq(detail::positive_part(qy)) +
         detail::sq(detail::positive_part(qz));
}

template <class T>
T cylinder_sq_distance(std::span<const T> p, const Vec3<T>& x) {
  using std::abs;
  using std::max;
  const T d1 = detail::radial(x.x, x.y) - p[0];
  const T d2 = abs(x.z) - p[1];
  const T m = max(d1, d2);
  if (m <= T(0)) return m * m;
  return detail::sq(detail::positive_part(d1)) + detail::sq(detail::positive_part(d2));
}

template <class T>
T ring_sq_distance(std::span<const T> p, const Vec3<T>& x) {
  const T f = ring_structure(p, x);
  return f * f;
}

// ---------------------------------------------------------------------------
// Composition rules.

inline constexpr std::size_t kMaxChildren = 2;

struct ChildLayout {
  Shape shape;
  std::size_t count;  // parameter count of the child
};

inline std::size_t child_count(Shape s) {
  return (s == Shape::Handle || s == Shape::Lever) ? 2 : 1;
}

inline ChildLayout child_layout(Shape s, std::size_t child) {
  switch (s) {
    case Shape::Handle: return child == 0 ? ChildLayout{Shape::Ring, 2} : ChildLayout{Shape::Cylinder, 2};
    case Shape::Lever: return child == 0 ? ChildLayout{Shape::Cuboid, 3} : ChildLayout{Shape::Cylinder, 2};
    default: return {s, 0};
  }
}

inline bool is_primitive(Shape s) { return s == Shape::Cuboid || s == Shape::Cylinder || s == Shape::Ring; }

// Child parameters gathered from the composite parameter vector.
template <class T>
std::array<T, 3> child_params(Shape s, std::span<const T> p, std::size_t child) {
  switch (s) {
    case Shape::Handle:
      // ring (r_maj, r_tube); stem (r = r_tube, h = h_stem)
      return child == 0 ? std::array<T, 3>{p[0], p[1], T(0)} : std::array<T, 3>{p[1], p[2], T(0)};
    case Shape::Lever:
      return child == 0 ? std::array<T, 3>{p[0], p[1], p[2]} : std::array<T, 3>{p[3], p[4], T(0)};
    default: return {p[0], p.size() > 1 ? p[1] : T(0), p.size() > 2 ? p[2] : T(0)};
  }
}

// Pose of a child in the composite frame.
//   handle: stem spans z in [0, 2 h_stem]; the ring lies in the xz plane,
//           centered above the stem so its outer surface touches the cap.
//   lever:  the hub cylinder stands on the +z face center of the bar.
template <class T>
BasicPose<T> child_frame(Shape s, std::span<const T> p, std::size_t child) {
  BasicPose<T> f;
  switch (s) {
    case Shape::Handle:
      if (child == 0) {
        f.rotation = Mat3<T>::cast(rot_x(-kPi / 2));
        f.translation = {T(0), T(0), T(2) * p[2] + p[0] + p[1]};
      } else {
        f.translation = {T(0), T(0), p[2]};
      }
      break;
    case Shape::Lever:
      if (child == 1) f.translation = {T(0), T(0), p[2] + p[4]};
      break;
    default: break;
  }
  return f;
}

template <class T>
T primitive_structure(Shape s, std::span<const T> p, const Vec3<T>& x) {
  switch (s) {
    case Shape::Cuboid: return cuboid_structure(p, x);
    case Shape::Cylinder: return cylinder_structure(p, x);
    case Shape::Ring: return ring_structure(p, x);
    default: throw DomainError("not a primitive shape");
  }
}

template <class T>
T primitive_sq_distance(Shape s, std::span<const T> p, const Vec3<T>& x) {
  switch (s) {
    case Shape::Cuboid: return cuboid_sq_distance(p, x);
    case Shape::Cylinder: return cylinder_sq_distance(p, x);
    case Shape::Ring: return ring_sq_distance(p, x);
    default: throw DomainError("not a primitive shape");
  }
}

namespace detail {

// Cylinder children of composites stand upright at (0, 0, z0). Their slab
// term |z - z0| - h is evaluated as max(z - (z0 + h), (z0 - h) - z) so that
// a parameter that cancels out (the stem half-height below the stem) has an
// exactly zero effect instead of rounding noise.
template <class T>
std::pair<T, T> stacked_cylinder_terms(std::span<const T> cp, const T& z0, const Vec3<T>& x) {
  using std::max;
  return {radial(x.x, x.y) - cp[0], max(x.z - (z0 + cp[1]), (z0 - cp[1]) - x.z)};
}

}  // namespace detail

// Structure value of a child at a composite-frame point.
template <class T>
T child_structure(Shape s, std::span<const T> p, std::size_t child, const Vec3<T>& x) {
  using std::max;
  const ChildLayout lay = child_layout(s, child);
  const auto cp = child_params(s, p, child);
  const BasicPose<T> f = child_frame(s, p, child);
  if (lay.shape == Shape::Cylinder) {
    const auto [d1, d2] = detail::stacked_cylinder_terms<T>(cp, f.translation.z, x);
    return max(d1, d2);
  }
  return primitive_structure<T>(lay.shape, std::span<const T>(cp.data(), lay.count), f.apply_inverse(x));
}

// F(params, local point) for any geometric shape.
template <class T>
T structure_local(Shape s, std::span<const T> p, const Vec3<T>& x) {
  using std::min;
  if (is_primitive(s)) return primitive_structure(s, p, x);
  if (s == Shape::Revolute || s == Shape::Prismatic)
    throw DomainError("kinematic templates have no implicit surface");
  T best = child_structure(s, p, 0, x);
  for (std::size_t c = 1; c < child_count(s); ++c) best = min(best, child_structure(s, p, c, x));
  return best;
}

namespace detail {

template <class T>
T child_sq_distance(Shape s, std::span<const T> p, std::size_t c, const Vec3<T>& x) {
  using std::max;
  const ChildLayout lay = child_layout(s, c);
  const auto cp = child_params(s, p, c);
  const BasicPose<T> f = child_frame(s, p, c);
  if (lay.shape == Shape::Cylinder) {
    const auto [d1, d2] = stacked_cylinder_terms<T>(cp, f.translation.z, x);
    const T m = max(d1, d2);
    return m <= T(0) ? m * m : sq(positive_part(d1)) + sq(positive_part(d2));
  }
  return primitive_sq_distance<T>(lay.shape, std::span<const T>(cp.data(), lay.count), f.apply_inverse(x));
}

}  // namespace detail

// Squared distance from a local point to the surface (composite: nearest
// child, lowest index on ties).
template <class T>
T sq_distance_local(Shape s, std::span<const T> p, const Vec3<T>& x) {
  if (is_primitive(s)) return primitive_sq_distance(s, p, x);
  if (s == Shape::Revolute || s == Shape::Prismatic)
    throw DomainError("kinematic templates have no implicit surface");
  if constexpr (std::is_same_v<T, double>) {
    double best = detail::child_sq_distance<double>(s, p, 0, x);
    for (std::size_t c = 1; c < child_count(s); ++c) best = std::min(best, detail::child_sq_distance<double>(s, p, c, x));
    return best;
  } else {
    // Only the nearest child carries a derivative; pick it on values.
    std::array<double, 8> pv{};
    for (std::size_t i = 0; i < p.size(); ++i) pv[i] = static_cast<double>(value_of(p[i]));
    const std::span<const double> ps(pv.data(), p.size());
    const Vec3d xv{static_cast<double>(value_of(x.x)), static_cast<double>(value_of(x.y)),
                   static_cast<double>(value_of(x.z))};
    std::size_t arg = 0;
    double best = detail::child_sq_distance<double>(s, ps, 0, xv);
    for (std::size_t c = 1; c < child_count(s); ++c) {
      const double d = detail::child_sq_distance<double>(s, ps, c, xv);
      if (d < best) best = d, arg = c;
    }
    return detail::child_sq_distance<T>(s, p, arg, x);
  }
}

// ---------------------------------------------------------------------------
// Area-parameterized surface coordinates.
//
// A SurfaceCoord identifies a surface point independently of the parameter
// values: (child, patch) select a face and (s, t) are patch coordinates that
// map to a point through a formula differentiable in the parameters.
//   cuboid   patches 0..5 = +x,-x,+y,-y,+z,-z; (s, t) in [-1, 1]^2
//   cylinder patch 0 = side (s = angle, t in [-1, 1]); 1/2 = top/bottom cap
//            (s = radial fraction, t = angle)
//   ring     patch 0 (s = major angle, t = tube angle)

struct SurfaceCoord {
  int child = 0;
  int patch = 0;
  double s = 0.0;
  double t = 0.0;
};

inline std::array<double, 6> primitive_patch_areas(Shape s, std::span<const double> p) {
  switch (s) {
    case Shape::Cuboid: {
      const double ax = 4 * p[1] * p[2], ay = 4 * p[0] * p[2], az = 4 * p[0] * p[1];
      return {ax, ax, ay, ay, az, az};
    }
    case Shape::Cylinder: {
      const double side = 2 * kPi * p[0] * 2 * p[1], cap = kPi * p[0] * p[0];
      return {side, cap, cap, 0, 0, 0};
    }
    case Shape::Ring: return {4 * kPi * kPi * p[0] * p[1], 0, 0, 0, 0, 0};
    default: throw DomainError("not a primitive shape");
  }
}

inline double primitive_area(Shape s, std::span<const double> p) {
  double a = 0.0;
  for (double v : primitive_patch_areas(s, p)) a += v;
  return a;
}

// Analytic surface area of each child (a primitive is its own single child).
inline std::array<double, kMaxChildren> child_areas(Shape s, std::span<const double> p) {
  std::array<double, kMaxChildren> a{};
  if (is_primitive(s)) {
    a[0] = primitive_area(s, p);
    return a;
  }
  for (std::size_t c = 0; c < child_count(s); ++c) {
    const ChildLayout lay = child_layout(s, c);
    const auto cp = child_params<double>(s, p, c);
    a[c] = primitive_area(lay.shape, std::span<const double>(cp.data(), lay.count));
  }
  return a;
}

inline double surface_area(Shape s, std::span<const double> p) {
  const auto a = child_areas(s, p);
  return a[0] + a[1];
}

namespace detail {

// Inverse CDF of the torus tube angle, whose density is proportional to
// R + r cos(phi) on [0, 2 pi).
inline double torus_tube_angle(double big_r, double small_r, double u) {
  const double target = 2 * kPi * big_r * u;
  double phi = 2 * kPi * u;
  for (int it = 0; it < 60; ++it) {
    const double f = big_r * phi + small_r * std::sin(phi) - target;
    const double df = big_r + small_r * std::cos(phi);
    double next = phi - f / std::max(df, 1e-300);
    next = std::clamp(next, 0.0, 2 * kPi);
    if (std::abs(next - phi) < 1e-15) {
      phi = next;
      break;
    }
    phi = next;
  }
  return phi;
}

inline std::size_t pick(std::span<const double> weights, double& u) {
  double total = 0.0;
  for (double w : weights) total += w;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last = i;
    const double share = weights[i] / total;
    if (u * 1.0 < acc + share) {
      u = std::clamp((u - acc) / share, 0.0, 1.0);
      return i;
    }
    acc += share;
  }
  u = 1.0;
  return last;
}

inline SurfaceCoord primitive_coord(Shape s, std::span<const double> p, double u0, double u1, double u2) {
  const auto areas = primitive_patch_areas(s, p);
  SurfaceCoord c;
  c.patch = static_cast<int>(pick(areas, u0));
  switch (s) {
    case Shape::Cuboid:
      c.s = 2 * u1 - 1;
      c.t = 2 * u2 - 1;
      break;
    case Shape::Cylinder:
      if (c.patch == 0) {
        c.s = 2 * kPi * u1;
        c.t = 2 * u2 - 1;
      } else {
        c.s = std::sqrt(u1);
        c.t = 2 * kPi * u2;
      }
      break;
    case Shape::Ring:
      c.s = 2 * kPi * u1;
      c.t = torus_tube_angle(p[0], p[1], u2);
      break;
    default: throw DomainError("not a primitive shape");
  }
  return c;
}

template <class T>
Vec3<T> primitive_point(Shape s, std::span<const T> p, const SurfaceCoord& c) {
  switch (s) {
    case Shape::Cuboid: {
      const int axis = c.patch / 2;
      const double sign = (c.patch % 2 == 0) ? 1.0 : -1.0;
      Vec3<T> v;
      const int ia = (axis + 1) % 3, ib = (axis + 2) % 3;
      v[axis] = p[axis] * sign;
      v[ia] = p[ia] * c.s;
      v[ib] = p[ib] * c.t;
      return v;
    }
    case Shape::Cylinder:
      if (c.patch == 0) return {p[0] * std::cos(c.s), p[0] * std::sin(c.s), p[1] * c.t};
      return {p[0] * (c.s * std::cos(c.t)), p[0] * (c.s * std::sin(c.t)), p[1] * (c.patch == 1 ? 1.0 : -1.0)};
    case Shape::Ring: {
      const T rr = p[0] + p[1] * std::cos(c.t);
      return {rr * std::cos(c.s), rr * std::sin(c.s), p[1] * std::sin(c.t)};
    }
    default: throw DomainError("not a primitive shape");
  }
}

}  // namespace detail

// Maps three uniform numbers to an area-uniform surface coordinate of the
// shape with the given (value) parameters.
inline SurfaceCoord surface_coord(Shape s, std::span<const double> p, double u0, double u1, double u2) {
  if (is_primitive(s)) return detail::primitive_coord(s, p, u0, u1, u2);
  const auto areas = child_areas(s, p);
  const std::size_t child = detail::pick(std::span<const double>(areas.data(), child_count(s)), u0);
  const ChildLayout lay = child_layout(s, child);
  const auto cp = child_params<double>(s, p, child);
  SurfaceCoord c = detail::primitive_coord(lay.shape, std::span<const double>(cp.data(), lay.count), u0, u1, u2);
  c.child = static_cast<int>(child);
  return c;
}

// Local-frame surface point for a coordinate; differentiable in the params.
template <class T>
Vec3<T> surface_point_local(Shape s, std::span<const T> p, const SurfaceCoord& c) {
  if (is_primitive(s)) return detail::primitive_point(s, p, c);
  const auto child = static_cast<std::size_t>(c.child);
  const ChildLayout lay = child_layout(s, child);
  const auto cp = child_params(s, p, child);
  const BasicPose<T> f = child_frame(s, p, child);
  return f.apply(detail::primitive_point<T>(lay.shape, std::span<const T>(cp.data(), lay.count), c));
}

// Structure value of the child a surface coordinate belongs to.
inline double own_child_structure(Shape s, std::span<const double> p, int child, const Vec3d& x) {
  if (is_primitive(s)) return primitive_structure(s, p, x);
  return child_structure(s, p, static_cast<std::size_t>(child), x);
}

}  // namespace aot
