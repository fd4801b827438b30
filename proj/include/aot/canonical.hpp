#pragma once

// Unique representatives for instances whose point set is invariant under
// some rotations of the local frame.
//
//   cylinder, ring  rotation about the local z axis is removed and z points
//                   into the half-space whose first non-zero component is
//                   positive
//   cuboid          extents sorted a >= b >= c; among the 24 proper axis
//                   permutations/flips giving that order, the one with the
//                   lexicographically largest rotation rows is kept
//   handle, lever   only the half-turn about the local z axis leaves the
//                   point set unchanged; the larger rotation rows win. A
//                   lever bar is first turned a quarter about z if needed
//                   so that a >= b (the hub is round, so this is exact).

#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "aot/geometry.hpp"
#include "aot/instance.hpp"

namespace aot {

namespace detail {

inline bool lex_greater(const Mat3d& a, const Mat3d& b, double tol = 1e-9) {
  for (std::size_t i = 0; i < 9; ++i) {
    if (a.m[i] > b.m[i] + tol) return true;
    if (a.m[i] < b.m[i] - tol) return false;
  }
  return false;
}

// First component with magnitude above 1e-9 is positive.
inline Vec3d canonical_sign(const Vec3d& v) {
  for (std::size_t i = 0; i < 3; ++i) {
    if (std::abs(v[i]) > 1e-9) return v[i] > 0 ? v : -v;
  }
  return v;
}

// The 24 signed permutation matrices with determinant +1.
inline const std::vector<Mat3d>& cube_rotations() {
  static const std::vector<Mat3d> rots = [] {
    std::vector<Mat3d> out;
    const std::array<std::array<int, 3>, 6> perms{{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    for (const auto& pm : perms)
      for (int signs = 0; signs < 8; ++signs) {
        Mat3d m;
        for (int c = 0; c < 3; ++c) m(pm[c], c) = (signs >> c & 1) ? -1.0 : 1.0;
        if (m.determinant() > 0) out.push_back(m);
      }
    return out;
  }();
  return rots;
}

inline Mat3d axial_canonical_rotation(const Mat3d& r) {
  const Vec3d z = canonical_sign(r.column(2));
  Mat3d out = rotation_between({0, 0, 1}, z);
  // The axis column is copied, not recomputed, so canonicalizing twice is
  // bit-identical.
  for (int i = 0; i < 3; ++i) out(i, 2) = z[i];
  return out;
}

}  // namespace detail

inline AotInstance canonicalize(const AotInstance& inst) {
  AotInstance out = inst;
  switch (inst.shape()) {
    case Shape::Cylinder:
    case Shape::Ring: out.pose.rotation = detail::axial_canonical_rotation(inst.pose.rotation); break;
    case Shape::Cuboid: {
      // The box with extents e under rotation R equals the box with extents
      // |P^T| e under R P for any signed permutation P.
      bool have = false;
      Mat3d best_r;
      std::vector<double> best_e;
      for (const Mat3d& p : detail::cube_rotations()) {
        std::vector<double> e(3);
        for (int c = 0; c < 3; ++c)
          for (int r = 0; r < 3; ++r)
            if (p(r, c) != 0.0) e[c] = inst.params[r];
        if (!(e[0] >= e[1] && e[1] >= e[2])) continue;
        const Mat3d cand = inst.pose.rotation * p;
        if (!have || detail::lex_greater(cand, best_r)) {
          best_r = cand;
          best_e = e;
          have = true;
        }
      }
      out.params = best_e;
      out.pose.rotation = best_r;
      break;
    }
    case Shape::Handle:
    case Shape::Lever: {
      if (inst.shape() == Shape::Lever && out.params[1] > out.params[0]) {
        // Quarter turn: new x = old y, new y = -old x.
        std::swap(out.params[0], out.params[1]);
        const Mat3d& r = inst.pose.rotation;
        out.pose.rotation = Mat3d::from_columns(r.column(1), -r.column(0), r.column(2));
      }
      // Half-turn about local z: negate the first two columns exactly.
      const Mat3d cur = out.pose.rotation;
      Mat3d exact = cur;
      for (int r = 0; r < 3; ++r) {
        exact(r, 0) = -cur(r, 0);
        exact(r, 1) = -cur(r, 1);
      }
      if (detail::lex_greater(exact, cur)) out.pose.rotation = exact;
      break;
    }
    default: break;
  }
  return out;
}

}  // namespace aot
