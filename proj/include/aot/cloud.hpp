#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "aot/errors.hpp"
#include "aot/geometry.hpp"

namespace aot {

// Points with optional per-point source labels. `labels[i]` indexes
// `label_names`; -1 marks points with no source (e.g. injected outliers).
struct PointCloud {
  std::vector<Vec3d> points;
  std::vector<int> labels;
  std::vector<std::string> label_names;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_labels() const { return !labels.empty(); }

  int label_id(const std::string& name) {
    for (std::size_t i = 0; i < label_names.size(); ++i)
      if (label_names[i] == name) return static_cast<int>(i);
    label_names.push_back(name);
    return static_cast<int>(label_names.size() - 1);
  }

  // Appends another cloud, remapping its label ids onto this cloud's names.
  void append(const PointCloud& o) {
    const bool labelled = has_labels() || o.has_labels();
    if (labelled && !has_labels()) labels.assign(points.size(), -1);
    points.insert(points.end(), o.points.begin(), o.points.end());
    if (!labelled) return;
    for (std::size_t i = 0; i < o.points.size(); ++i) {
      const int l = o.has_labels() ? o.labels[i] : -1;
      labels.push_back(l < 0 ? -1 : label_id(o.label_names[static_cast<std::size_t>(l)]));
    }
  }

  PointCloud subset(const std::vector<std::size_t>& idx) const {
    PointCloud out;
    out.label_names = label_names;
    out.points.reserve(idx.size());
    for (auto i : idx) {
      out.points.push_back(points[i]);
      if (has_labels()) out.labels.push_back(labels[i]);
    }
    return out;
  }

  void transform(const Pose& p) {
    for (auto& x : points) x = p.apply(x);
  }
};

// Two observations of a scene. With `corresponding` set, index i names the
// same material point in both clouds.
struct CloudPair {
  PointCloud initial;
  PointCloud final;
  bool corresponding = false;
};

struct TriMesh {
  std::vector<Vec3d> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  void append(const TriMesh& o) {
    const auto base = static_cast<std::uint32_t>(vertices.size());
    vertices.insert(vertices.end(), o.vertices.begin(), o.vertices.end());
    for (auto t : o.triangles) triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  }

  double area() const {
    double a = 0.0;
    for (const auto& t : triangles)
      a += 0.5 * norm(cross(vertices[t[1]] - vertices[t[0]], vertices[t[2]] - vertices[t[0]]));
    return a;
  }
};

inline Vec3d centroid(const std::vector<Vec3d>& pts) {
  if (pts.empty()) throw DomainError("centroid of an empty point set");
  Vec3d c{};
  for (const auto& p : pts) c += p;
  return c / static_cast<double>(pts.size());
}

struct Bounds {
  Vec3d lo, hi;
  Vec3d center() const { return (lo + hi) * 0.5; }
  Vec3d extent() const { return hi - lo; }
};

inline Bounds bounding_box(const std::vector<Vec3d>& pts) {
  if (pts.empty()) throw DomainError("bounding box of an empty point set");
  Bounds b{pts[0], pts[0]};
  for (const auto& p : pts)
    for (std::size_t k = 0; k < 3; ++k) {
      b.lo[k] = std::min(b.lo[k], p[k]);
      b.hi[k] = std::max(b.hi[k], p[k]);
    }
  return b;
}

// Radius of the bounding sphere centred at the bounding-box centre.
inline double bounding_radius(const std::vector<Vec3d>& pts) {
  const Vec3d c = bounding_box(pts).center();
  double r = 0.0;
  for (const auto& p : pts) r = std::max(r, norm(p - c));
  return r;
}

}  // namespace aot
