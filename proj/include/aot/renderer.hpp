#pragma once

// Drawing instances as point clouds and meshes, camera-visible subsets,
// corruption, and observation pairs of articulated scenes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "aot/cloud.hpp"
#include "aot/errors.hpp"
#include "aot/hull.hpp"
#include "aot/instance.hpp"
#include "aot/joint.hpp"
#include "aot/structure.hpp"

namespace aot {

// Splits n into integer shares proportional to the weights (largest
// remainder, ties to the lower index).
inline std::vector<std::size_t> proportional_counts(std::span<const double> w, std::size_t n) {
  double total = 0.0;
  for (double x : w) total += x;
  std::vector<std::size_t> out(w.size(), 0);
  if (total <= 0.0) {
    if (!out.empty()) out[0] = n;
    return out;
  }
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double exact = static_cast<double>(n) * w[i] / total;
    out[i] = static_cast<std::size_t>(std::floor(exact));
    used += out[i];
    rem.push_back({exact - static_cast<double>(out[i]), i});
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; used < n; ++k, ++used) ++out[rem[k % rem.size()].second];
  return out;
}

// Area-uniform surface coordinates; composite children receive counts in
// proportion to their analytic areas.
inline std::vector<SurfaceCoord> sample_surface_coords(Shape s, std::span<const double> p, std::size_t n,
                                                       std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SurfaceCoord> out;
  out.reserve(n);
  if (is_primitive(s)) {
    for (std::size_t i = 0; i < n; ++i) {
      const double u0 = u(rng), u1 = u(rng), u2 = u(rng);
      out.push_back(detail::primitive_coord(s, p, u0, u1, u2));
    }
    return out;
  }
  const auto areas = child_areas(s, p);
  const auto counts = proportional_counts(std::span<const double>(areas.data(), child_count(s)), n);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const ChildLayout lay = child_layout(s, c);
    const auto cp = child_params<double>(s, p, c);
    for (std::size_t i = 0; i < counts[c]; ++i) {
      const double u0 = u(rng), u1 = u(rng), u2 = u(rng);
      SurfaceCoord sc = detail::primitive_coord(lay.shape, std::span<const double>(cp.data(), lay.count), u0, u1, u2);
      sc.child = static_cast<int>(c);
      out.push_back(sc);
    }
  }
  return out;
}

// Template id of the primitive a surface coordinate lies on.
inline const std::string& source_label(const AotTemplate& t, int child) {
  if (!t.is_composite()) return t.id;
  return t.children[static_cast<std::size_t>(child)].template_id;
}

inline PointCloud sample_surface(const AotInstance& inst, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DomainError("sample_surface needs n >= 1");
  validate_instance(inst);
  const AotTemplate& t = inst.tmpl();
  if (!t.is_geometric()) throw DomainError("kinematic template '" + t.id + "' has no surface");
  std::mt19937_64 rng(seed);
  const auto coords = sample_surface_coords(t.shape, inst.params, n, rng);
  PointCloud cloud;
  cloud.points.reserve(n);
  cloud.labels.reserve(n);
  for (const auto& c : coords) {
    cloud.points.push_back(inst.pose.apply(surface_point_local<double>(t.shape, inst.params, c)));
    cloud.labels.push_back(cloud.label_id(source_label(t, c.child)));
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Meshes

namespace detail {

inline TriMesh cuboid_mesh(std::span<const double> p) {
  TriMesh m;
  for (int i = 0; i < 8; ++i)
    m.vertices.push_back({(i & 1) ? p[0] : -p[0], (i & 2) ? p[1] : -p[1], (i & 4) ? p[2] : -p[2]});
  // Two outward triangles per face.
  m.triangles = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
                 {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
  return m;
}

inline TriMesh cylinder_mesh(std::span<const double> p, std::uint32_t res) {
  TriMesh m;
  for (int side = 0; side < 2; ++side)
    for (std::uint32_t i = 0; i < res; ++i) {
      const double a = 2 * kPi * i / res;
      m.vertices.push_back({p[0] * std::cos(a), p[0] * std::sin(a), side ? p[1] : -p[1]});
    }
  const std::uint32_t bottom = 2 * res, top = 2 * res + 1;
  m.vertices.push_back({0, 0, -p[1]});
  m.vertices.push_back({0, 0, p[1]});
  for (std::uint32_t i = 0; i < res; ++i) {
    const std::uint32_t j = (i + 1) % res;
    m.triangles.push_back({i, j, res + j});
    m.triangles.push_back({i, res + j, res + i});
    m.triangles.push_back({bottom, j, i});
    m.triangles.push_back({top, res + i, res + j});
  }
  return m;
}

inline TriMesh ring_mesh(std::span<const double> p, std::uint32_t res) {
  TriMesh m;
  for (std::uint32_t i = 0; i < res; ++i)
    for (std::uint32_t k = 0; k < res; ++k) {
      SurfaceCoord c{0, 0, 2 * kPi * i / res, 2 * kPi * k / res};
      m.vertices.push_back(primitive_point<double>(Shape::Ring, p, c));
    }
  for (std::uint32_t i = 0; i < res; ++i)
    for (std::uint32_t k = 0; k < res; ++k) {
      const std::uint32_t i1 = (i + 1) % res, k1 = (k + 1) % res;
      const std::uint32_t a = i * res + k, b = i1 * res + k, c = i1 * res + k1, d = i * res + k1;
      m.triangles.push_back({a, b, c});
      m.triangles.push_back({a, c, d});
    }
  return m;
}

inline TriMesh primitive_mesh(Shape s, std::span<const double> p, std::uint32_t res) {
  switch (s) {
    case Shape::Cuboid: return cuboid_mesh(p);
    case Shape::Cylinder: return cylinder_mesh(p, res);
    case Shape::Ring: return ring_mesh(p, res);
    default: throw DomainError("not a primitive shape");
  }
}

}  // namespace detail

// Closed analytic mesh of a geometric instance in world coordinates.
inline TriMesh render_mesh(const AotInstance& inst, std::uint32_t resolution = 64) {
  validate_instance(inst);
  if (resolution < 3) throw DomainError("mesh resolution must be at least 3");
  const AotTemplate& t = inst.tmpl();
  if (!t.is_geometric()) throw DomainError("kinematic template '" + t.id + "' has no surface");
  TriMesh mesh;
  const std::span<const double> p = inst.params;
  if (!t.is_composite()) {
    mesh = detail::primitive_mesh(t.shape, p, resolution);
  } else {
    for (std::size_t c = 0; c < child_count(t.shape); ++c) {
      const ChildLayout lay = child_layout(t.shape, c);
      const auto cp = child_params<double>(t.shape, p, c);
      TriMesh part = detail::primitive_mesh(lay.shape, std::span<const double>(cp.data(), lay.count), resolution);
      const Pose f = child_frame<double>(t.shape, p, c);
      for (auto& v : part.vertices) v = f.apply(v);
      mesh.append(part);
    }
  }
  for (auto& v : mesh.vertices) v = inst.pose.apply(v);
  return mesh;
}

// ---------------------------------------------------------------------------
// Hidden-point removal

inline constexpr double kDefaultFlipFactor = 100.0;

// Indices of the points visible from `camera` by spherical-flip hidden-point
// removal. The flip radius is flip_factor x the cloud's bounding radius,
// raised to twice the farthest point distance when the camera is so far
// away that the smaller radius would not enclose the cloud.
inline std::vector<std::size_t> visible_indices(const PointCloud& cloud, const Vec3d& camera,
                                                double flip_factor = kDefaultFlipFactor) {
  if (cloud.empty()) throw DomainError("partial_scan needs a non-empty cloud");
  const Vec3d center = bounding_box(cloud.points).center();
  const double radius = bounding_radius(cloud.points);
  if (norm(camera - center) <= radius) throw GeometryError("camera lies inside the cloud's bounding sphere");
  double far = 0.0;
  for (const auto& p : cloud.points) far = std::max(far, norm(p - camera));
  const double flip = std::max(flip_factor * radius, 2.0 * far);
  std::vector<Vec3d> flipped;
  flipped.reserve(cloud.size() + 1);
  for (const auto& p : cloud.points) {
    const Vec3d q = p - camera;
    const double d = norm(q);
    flipped.push_back(q * ((2.0 * flip - d) / d));
  }
  flipped.push_back({0, 0, 0});
  std::vector<char> on;
  try {
    on = convex_hull_vertices(flipped);
  } catch (const GeometryError&) {
    // A planar cloud with the camera in its plane: every point is on the rim.
    on.assign(flipped.size(), 1);
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (on[i]) idx.push_back(i);
  return idx;
}

inline PointCloud partial_scan(const PointCloud& cloud, const Vec3d& camera, double flip_factor = kDefaultFlipFactor) {
  return cloud.subset(visible_indices(cloud, camera, flip_factor));
}

// ---------------------------------------------------------------------------
// Corruption

struct NoiseConfig {
  double sigma_rel = 0.01;  // jitter sigma as a fraction of the bounding radius
  double dropout = 0.2;
  double outliers = 0.02;
  bool partial = false;  // keep only points visible from the camera
  double flip_factor = kDefaultFlipFactor;

  static NoiseConfig none() { return {0.0, 0.0, 0.0, false, kDefaultFlipFactor}; }
  bool is_clean() const { return sigma_rel == 0.0 && dropout == 0.0 && outliers == 0.0 && !partial; }
};

namespace detail {

inline void check_fractions(double sigma, double dropout, double outliers) {
  if (!(sigma >= 0.0)) throw DomainError("noise sigma must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw DomainError("dropout fraction must lie in [0, 1)");
  if (!(outliers >= 0.0 && outliers < 1.0)) throw DomainError("outlier fraction must lie in [0, 1)");
}

inline std::vector<std::size_t> kept_after_dropout(std::size_t n, double dropout, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto drop = static_cast<std::size_t>(std::llround(dropout * static_cast<double>(n)));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> kept(order.begin() + static_cast<std::ptrdiff_t>(std::min(drop, n)), order.end());
  std::sort(kept.begin(), kept.end());
  return kept;
}

inline void jitter(PointCloud& c, double sigma, std::mt19937_64& rng) {
  if (sigma == 0.0) return;
  std::normal_distribution<double> g(0.0, sigma);
  for (auto& p : c.points) {
    p.x += g(rng);
    p.y += g(rng);
    p.z += g(rng);
  }
}

inline void add_outliers(PointCloud& c, const Bounds& box, std::size_t m, std::mt19937_64& rng) {
  const Vec3d mid = box.center();
  const Vec3d half = box.extent() * 0.75;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t i = 0; i < m; ++i) {
    c.points.push_back({mid.x + half.x * u(rng), mid.y + half.y * u(rng), mid.z + half.z * u(rng)});
    if (c.has_labels()) c.labels.push_back(-1);
  }
}

}  // namespace detail

// Gaussian jitter (absolute sigma), then uniform dropout, then outliers
// drawn uniformly in the input's bounding box scaled 1.5x about its centre.
inline PointCloud augment(const PointCloud& cloud, double sigma, double dropout, double outliers, std::uint64_t seed) {
  detail::check_fractions(sigma, dropout, outliers);
  if (cloud.empty()) return cloud;
  std::mt19937_64 rng(seed);
  PointCloud out = cloud;
  detail::jitter(out, sigma, rng);
  out = out.subset(detail::kept_after_dropout(cloud.size(), dropout, rng));
  const auto m = static_cast<std::size_t>(std::llround(outliers * static_cast<double>(cloud.size())));
  detail::add_outliers(out, bounding_box(cloud.points), m, rng);
  return out;
}

// Corrupts both clouds of a pair. Dropout removes the same indices from both
// so correspondences survive; jitter and outliers are drawn independently.
inline CloudPair augment_pair(const CloudPair& pair, double sigma, double dropout, double outliers,
                              std::uint64_t seed) {
  detail::check_fractions(sigma, dropout, outliers);
  std::mt19937_64 rng(seed);
  CloudPair out = pair;
  detail::jitter(out.initial, sigma, rng);
  detail::jitter(out.final, sigma, rng);
  if (pair.corresponding) {
    const auto kept = detail::kept_after_dropout(pair.initial.size(), dropout, rng);
    out.initial = out.initial.subset(kept);
    out.final = out.final.subset(kept);
  } else {
    out.initial = out.initial.subset(detail::kept_after_dropout(pair.initial.size(), dropout, rng));
    out.final = out.final.subset(detail::kept_after_dropout(pair.final.size(), dropout, rng));
  }
  const auto m = static_cast<std::size_t>(std::llround(outliers * static_cast<double>(pair.initial.size())));
  if (!pair.initial.empty()) detail::add_outliers(out.initial, bounding_box(pair.initial.points), m, rng);
  if (!pair.final.empty()) detail::add_outliers(out.final, bounding_box(pair.final.points), m, rng);
  return out;
}

// ---------------------------------------------------------------------------
// Articulated scenes

// A moving part on a one-DOF joint plus static base parts. `part` is placed
// at joint value `joint.lower`; a state s in [0, 1] moves it by s x range.
struct SceneSpec {
  AotInstance part;
  std::vector<AotInstance> base;
  KinematicParams joint;
  double state_initial = 0.0;
  double state_final = 1.0;
  Vec3d camera{5, 0, 0};
  Vec3d look_at{0, 0, 0};
  NoiseConfig noise;
  double moving_share = 0.5;  // fraction of points drawn on the moving part when a base exists
};

inline void validate_scene(const SceneSpec& s) {
  validate_instance(s.part);
  if (!s.part.tmpl().is_geometric()) throw DomainError("scene moving part must be geometric");
  for (const auto& b : s.base) {
    validate_instance(b);
    if (!b.tmpl().is_geometric()) throw DomainError("scene base parts must be geometric");
  }
  validate_joint(s.joint);
  for (double st : {s.state_initial, s.state_final})
    if (!(st >= 0.0 && st <= 1.0)) throw DomainError("joint states must lie in [0, 1]");
  if (!(s.moving_share > 0.0 && s.moving_share <= 1.0)) throw DomainError("moving_share must lie in (0, 1]");
}

// Rigid placement of the moving part at joint state `state`.
inline Pose scene_state_pose(const SceneSpec& s, double state) {
  return joint_displacement(s.joint, state * s.joint.range());
}

// Moving-part instance at a joint state.
inline AotInstance part_at_state(const SceneSpec& s, double state) {
  AotInstance inst = s.part;
  inst.pose = compose(scene_state_pose(s, state), s.part.pose);
  return inst;
}

inline constexpr const char* kBaseLabel = "base";

// Clean corresponding pair: the moving part is sampled once and placed at
// both states; base points are appended unchanged to both clouds.
inline CloudPair render_pair(const SceneSpec& scene, std::size_t n, std::uint64_t seed) {
  validate_scene(scene);
  if (n < 2) throw DomainError("render_pair needs n >= 2");
  const std::size_t n_move =
      scene.base.empty() ? n : std::max<std::size_t>(1, std::llround(scene.moving_share * static_cast<double>(n)));
  const std::size_t n_base = n - n_move;
  const PointCloud moving = sample_surface(scene.part, n_move, seed);
  CloudPair pair;
  pair.corresponding = true;
  pair.initial = moving;
  pair.initial.transform(scene_state_pose(scene, scene.state_initial));
  pair.final = moving;
  pair.final.transform(scene_state_pose(scene, scene.state_final));
  if (n_base > 0 && !scene.base.empty()) {
    std::vector<double> areas;
    for (const auto& b : scene.base) areas.push_back(surface_area(b.shape(), b.params));
    const auto counts = proportional_counts(areas, n_base);
    PointCloud base;
    for (std::size_t i = 0; i < scene.base.size(); ++i) {
      if (counts[i] == 0) continue;
      PointCloud part = sample_surface(scene.base[i], counts[i], seed + 1000003ULL * (i + 1));
      std::fill(part.labels.begin(), part.labels.end(), 0);
      part.label_names = {kBaseLabel};
      base.append(part);
    }
    pair.initial.append(base);
    pair.final.append(base);
  }
  return pair;
}

// What a sensor would deliver for the scene: the clean pair, restricted to
// points visible from the camera in both states when `noise.partial` is set,
// then corrupted by the scene's noise config (sigma relative to the initial
// cloud's bounding radius).
inline CloudPair render_observation(const SceneSpec& scene, std::size_t n, std::uint64_t seed) {
  CloudPair pair = render_pair(scene, n, seed);
  if (scene.noise.partial) {
    const auto a = visible_indices(pair.initial, scene.camera, scene.noise.flip_factor);
    const auto b = visible_indices(pair.final, scene.camera, scene.noise.flip_factor);
    std::vector<std::size_t> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    pair.initial = pair.initial.subset(both);
    pair.final = pair.final.subset(both);
  }
  const double sigma = scene.noise.sigma_rel * bounding_radius(pair.initial.points);
  if (sigma > 0.0 || scene.noise.dropout > 0.0 || scene.noise.outliers > 0.0)
    pair = augment_pair(pair, sigma, scene.noise.dropout, scene.noise.outliers, seed ^ 0x9e3779b97f4a7c15ULL);
  return pair;
}

}  // namespace aot
