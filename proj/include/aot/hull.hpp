#pragma once

// Incremental 3-D convex hull. Only the hull vertex set is exposed, which is
// what hidden-point removal needs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "aot/errors.hpp"
#include "aot/geometry.hpp"

namespace aot {

namespace detail {

class IncrementalHull {
public:
  explicit IncrementalHull(std::span<const Vec3d> pts) : pts_(pts) {
    double scale = 0.0;
    for (const auto& p : pts_) scale = std::max({scale, std::abs(p.x), std::abs(p.y), std::abs(p.z)});
    eps_ = 1e-11 * std::max(scale, 1e-300);
  }

  // Marks hull vertices; throws GeometryError when all points are coplanar.
  std::vector<char> vertices() {
    const std::size_t n = pts_.size();
    if (n < 4) throw GeometryError("convex hull needs at least 4 points");
    const auto seed = initial_simplex();
    for (std::size_t i = 0; i < n; ++i) {
      if (i == seed[0] || i == seed[1] || i == seed[2] || i == seed[3]) continue;
      add_point(static_cast<std::uint32_t>(i));
    }
    std::vector<char> on(n, 0);
    for (const auto& f : faces_)
      if (f.alive)
        for (auto v : f.v) on[v] = 1;
    return on;
  }

private:
  struct Face {
    std::array<std::uint32_t, 3> v;
    Vec3d normal;
    double offset;
    bool alive = true;
  };

  static std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) { return (std::uint64_t(a) << 32) | b; }

  double signed_dist(const Face& f, const Vec3d& p) const { return dot(f.normal, p) - f.offset; }

  void make_face(std::uint32_t a, std::uint32_t b, std::uint32_t c) {
    Face f{{a, b, c}, {}, 0.0};
    const Vec3d n = cross(pts_[b] - pts_[a], pts_[c] - pts_[a]);
    const double len = norm(n);
    f.normal = len > 0 ? n / len : Vec3d{};
    f.offset = dot(f.normal, pts_[a]);
    const auto id = static_cast<std::uint32_t>(faces_.size());
    faces_.push_back(f);
    live_.push_back(id);
    edges_[edge_key(a, b)] = id;
    edges_[edge_key(b, c)] = id;
    edges_[edge_key(c, a)] = id;
  }

  std::array<std::size_t, 4> initial_simplex() {
    const std::size_t n = pts_.size();
    std::size_t i0 = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (pts_[i].x < pts_[i0].x) i0 = i;
    std::size_t i1 = i0;
    double best = -1;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = squared_norm(pts_[i] - pts_[i0]);
      if (d > best) best = d, i1 = i;
    }
    const Vec3d u = pts_[i1] - pts_[i0];
    std::size_t i2 = i0;
    best = -1;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = squared_norm(cross(u, pts_[i] - pts_[i0]));
      if (d > best) best = d, i2 = i;
    }
    const Vec3d nrm = cross(u, pts_[i2] - pts_[i0]);
    std::size_t i3 = i0;
    best = -1;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = std::abs(dot(nrm, pts_[i] - pts_[i0]));
      if (d > best) best = d, i3 = i;
    }
    const double nn = norm(nrm);
    if (nn <= eps_ * eps_ || best / nn <= eps_) throw GeometryError("points are coplanar; hull is degenerate");
    const auto a = static_cast<std::uint32_t>(i0), b = static_cast<std::uint32_t>(i1),
               c = static_cast<std::uint32_t>(i2), d = static_cast<std::uint32_t>(i3);
    if (dot(nrm, pts_[i3] - pts_[i0]) > 0) {
      make_face(a, c, b);
      make_face(a, b, d);
      make_face(b, c, d);
      make_face(c, a, d);
    } else {
      make_face(a, b, c);
      make_face(a, d, b);
      make_face(b, d, c);
      make_face(c, d, a);
    }
    return {i0, i1, i2, i3};
  }

  void add_point(std::uint32_t p) {
    const Vec3d& x = pts_[p];
    if (dead_ > live_.size() / 2) {
      std::erase_if(live_, [&](std::uint32_t f) { return !faces_[f].alive; });
      dead_ = 0;
    }
    std::int64_t start = -1;
    for (auto it = live_.rbegin(); it != live_.rend(); ++it)
      if (faces_[*it].alive && signed_dist(faces_[*it], x) > eps_) {
        start = *it;
        break;
      }
    if (start < 0) return;
    // Flood the connected visible region from the first visible face.
    visible_.clear();
    stack_.assign(1, static_cast<std::uint32_t>(start));
    mark_.resize(faces_.size(), 0);
    ++stamp_;
    mark_[start] = stamp_;
    while (!stack_.empty()) {
      const std::uint32_t f = stack_.back();
      stack_.pop_back();
      visible_.push_back(f);
      for (int e = 0; e < 3; ++e) {
        const auto a = faces_[f].v[e], b = faces_[f].v[(e + 1) % 3];
        const std::uint32_t g = edges_.at(edge_key(b, a));
        if (mark_[g] == stamp_ || mark_[g] == -stamp_) continue;
        if (signed_dist(faces_[g], x) > eps_) {
          mark_[g] = stamp_;
          stack_.push_back(g);
        } else {
          mark_[g] = -stamp_;
        }
      }
    }
    horizon_.clear();
    for (auto f : visible_)
      for (int e = 0; e < 3; ++e) {
        const auto a = faces_[f].v[e], b = faces_[f].v[(e + 1) % 3];
        if (mark_[edges_.at(edge_key(b, a))] != stamp_) horizon_.push_back({a, b});
      }
    for (auto f : visible_) {
      faces_[f].alive = false;
      ++dead_;
      for (int e = 0; e < 3; ++e) edges_.erase(edge_key(faces_[f].v[e], faces_[f].v[(e + 1) % 3]));
    }
    for (const auto& [a, b] : horizon_) make_face(a, b, p);
    mark_.resize(faces_.size(), 0);
  }

  std::span<const Vec3d> pts_;
  double eps_ = 0.0;
  std::vector<Face> faces_;
  std::vector<std::uint32_t> live_;
  std::size_t dead_ = 0;
  std::unordered_map<std::uint64_t, std::uint32_t> edges_;
  std::vector<std::uint32_t> visible_, stack_;
  std::vector<std::array<std::uint32_t, 2>> horizon_;
  std::vector<std::int64_t> mark_;
  std::int64_t stamp_ = 0;
};

}  // namespace detail

// Per-point flag: 1 if the point is a vertex of the convex hull.
inline std::vector<char> convex_hull_vertices(std::span<const Vec3d> pts) {
  return detail::IncrementalHull(pts).vertices();
}

}  // namespace aot
