#pragma once

// Parameter estimation and ontology identification by direct optimization
// of a point-to-surface objective.
//
// Objective for an instance and a cloud X:
//   L = mean_i d(x_i, surface)^2 + lambda_cov * mean_k max(0, min_i |s_k - x_i| - delta)^2
// where s_k are surface samples drawn at fixed area coordinates, so that the
// coverage term stays differentiable in the parameters, and delta is the
// cloud's sampling radius: surface regions closer than delta to some cloud
// point count as covered, so a surface that is exactly sampled scores zero.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "aot/canonical.hpp"
#include "aot/cloud.hpp"
#include "aot/dual.hpp"
#include "aot/errors.hpp"
#include "aot/geometry.hpp"
#include "aot/instance.hpp"
#include "aot/kdtree.hpp"
#include "aot/parallel.hpp"
#include "aot/renderer.hpp"
#include "aot/structure.hpp"
#include "aot/templates.hpp"

namespace aot {

struct FitConfig {
  std::size_t starts = 8;
  std::size_t max_iterations = 500;
  double base_step = 0.05;        // in units of the cloud's RMS radius
  double step_decay = 0.5;        // applied on every rejected step
  double tolerance = 1e-6;        // relative loss change ...
  std::size_t window = 10;        // ... over this many accepted steps
  double lambda_cov = 1.0;
  std::size_t coverage_samples = 512;
  std::uint64_t seed = 0;
  // Multi-start budget: every start runs `screen_iterations`, the best
  // `refine_starts` continue up to `max_iterations`.
  std::size_t screen_iterations = 30;
  std::size_t screen_points = 128;  // cloud and coverage samples used while screening
  std::size_t refine_starts = 2;
  std::size_t max_points = 512;  // cloud subsample used during descent
  std::size_t composite_passes = 2;
  std::size_t child_iterations = 50;
  std::size_t jobs = 1;
};

inline void validate_fit_config(const FitConfig& c) {
  if (c.starts < 1) throw DomainError("fit starts must be >= 1");
  if (c.max_iterations < 1 || c.coverage_samples < 1 || c.window < 1 || c.max_points < 1 || c.refine_starts < 1 ||
      c.screen_points < 1)
    throw DomainError("fit counts must be positive");
  if (!(c.base_step > 0.0) || !(c.step_decay > 0.0 && c.step_decay < 1.0))
    throw DomainError("fit step schedule needs base_step > 0 and decay in (0, 1)");
  if (!(c.lambda_cov >= 0.0)) throw DomainError("lambda_cov must be non-negative");
}

struct StartTrace {
  std::size_t start = 0;
  double loss = 0.0;  // final loss of this start, in cloud units squared
  std::size_t iterations = 0;
};

struct FitResult {
  AotInstance instance;
  double loss = 0.0;             // objective at `instance` on the full cloud
  double normalized_loss = 0.0;  // loss / scale^2
  double scale = 1.0;            // RMS radius of the cloud about its centroid
  std::vector<StartTrace> traces;
  double mean_residual = 0.0, max_residual = 0.0;
  bool degenerate_init = false;  // covariance rank < 3, identity rotation used
};

// ---------------------------------------------------------------------------
// Objective

// Everything the objective needs besides the instance itself.
struct LossContext {
  Shape shape = Shape::Cuboid;
  std::vector<Vec3d> points;
  std::vector<SurfaceCoord> coverage;
  const KdTree* tree = nullptr;  // over the whole normalized cloud
  double lambda_cov = 1.0;
  double margin = 0.0;  // coverage dead zone (sampling radius of the cloud)
  double cap = std::numeric_limits<double>::infinity();  // largest coverage gap charged
};

inline constexpr double kSamplingRadiusFactor = 4.0;

// Coverage gaps are charged up to this multiple of the sampling radius, so
// surface the sensor never saw costs a bounded amount per sample instead of
// pulling the fit toward it.
inline constexpr double kCoverageCapFactor = 1.0;

// Sampling radius of a cloud: kSamplingRadiusFactor x the mean distance
// from a point to its nearest neighbour. For uniform surface samples the
// chance that a surface point lies farther than this from every sample is
// about exp(-4 pi), so exact samplings leave the coverage term at zero.
inline double sampling_radius(const KdTree& tree) {
  if (tree.size() < 2) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < tree.size(); ++i) sum += std::sqrt(tree.nearest_other(i).sq_dist);
  return kSamplingRadiusFactor * sum / static_cast<double>(tree.size());
}

namespace detail {

template <class T>
Vec3d to_vec3d(const Vec3<T>& v) {
  return {static_cast<double>(value_of(v.x)), static_cast<double>(value_of(v.y)), static_cast<double>(value_of(v.z))};
}

}  // namespace detail

template <class T>
T loss_value(const LossContext& ctx, std::span<const T> params, const BasicPose<T>& pose) {
  T point_term(0.0);
  const BasicPose<T> inv = pose.inverse();
  for (const auto& x : ctx.points) point_term += sq_distance_local<T>(ctx.shape, params, inv.rotation * x + inv.translation);
  point_term = point_term / static_cast<double>(ctx.points.size());
  if (ctx.lambda_cov == 0.0 || ctx.coverage.empty()) return point_term;
  // Samples are located on values first; only those in the charged band
  // are re-evaluated with derivatives.
  std::array<double, 8> pv{};
  for (std::size_t i = 0; i < params.size(); ++i) pv[i] = static_cast<double>(value_of(params[i]));
  const std::span<const double> ps(pv.data(), params.size());
  Pose posev;
  for (std::size_t i = 0; i < 9; ++i) posev.rotation.m[i] = static_cast<double>(value_of(pose.rotation.m[i]));
  posev.translation = detail::to_vec3d(pose.translation);
  T cover(0.0);
  for (const auto& c : ctx.coverage) {
    const auto hit = ctx.tree->nearest(posev.apply(surface_point_local<double>(ctx.shape, ps, c)));
    if (hit.sq_dist <= ctx.margin * ctx.margin) continue;
    using std::sqrt;
    if (hit.sq_dist >= (ctx.margin + ctx.cap) * (ctx.margin + ctx.cap)) {
      cover += T(ctx.cap * ctx.cap);
      continue;
    }
    const Vec3<T> s = pose.apply(surface_point_local<T>(ctx.shape, params, c));
    const T gap = sqrt(squared_norm(s - Vec3<T>::cast(ctx.tree->point(hit.index)))) - ctx.margin;
    cover += gap * gap;
  }
  return point_term + cover * (ctx.lambda_cov / static_cast<double>(ctx.coverage.size()));
}

inline std::vector<SurfaceCoord> coverage_coords(const AotInstance& inst, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_surface_coords(inst.shape(), inst.params, n, rng);
}

// Objective value of an instance on a cloud; the coverage samples are drawn
// from the instance's own surface with `seed`.
inline double point_to_surface_loss(const AotInstance& inst, const PointCloud& cloud, double lambda_cov = 1.0,
                                    std::size_t coverage_samples = 512, std::uint64_t seed = 0) {
  if (cloud.empty()) throw DomainError("point_to_surface_loss needs a non-empty cloud");
  validate_instance(inst);
  if (!inst.tmpl().is_geometric()) throw DomainError("kinematic template '" + inst.template_id + "' has no surface");
  const KdTree tree(cloud.points);
  const double margin = sampling_radius(tree);
  LossContext ctx{inst.shape(), cloud.points, {}, &tree, lambda_cov, margin, kCoverageCapFactor * margin};
  if (lambda_cov > 0.0) ctx.coverage = coverage_coords(inst, coverage_samples, seed);
  return loss_value<double>(ctx, inst.params, inst.pose);
}

// Symmetric mean of nearest squared distances between two clouds.
inline double chamfer(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) throw DomainError("chamfer needs non-empty clouds");
  const KdTree ta(a.points), tb(b.points);
  double ab = 0.0, ba = 0.0;
  for (const auto& p : a.points) ab += tb.nearest(p).sq_dist;
  for (const auto& p : b.points) ba += ta.nearest(p).sq_dist;
  return ab / static_cast<double>(a.size()) + ba / static_cast<double>(b.size());
}

// Chamfer between two instance surfaces using analytic distances: mean
// squared distance of samples of each surface to the other surface.
inline double surface_chamfer(const AotInstance& a, const AotInstance& b, std::size_t n = 2000,
                              std::uint64_t seed = 0) {
  const PointCloud sa = sample_surface(a, n, seed), sb = sample_surface(b, n, seed + 1);
  double ab = 0.0, ba = 0.0;
  for (const auto& p : sa.points) ab += sq_distance_local<double>(b.shape(), b.params, b.pose.apply_inverse(p));
  for (const auto& p : sb.points) ba += sq_distance_local<double>(a.shape(), a.params, a.pose.apply_inverse(p));
  return ab / static_cast<double>(n) + ba / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Initialization

struct InitGuess {
  std::vector<double> params;
  Pose pose;
};

struct CloudFrame {
  Vec3d centroid;
  Mat3d axes;       // columns: principal directions, descending variance
  Vec3d half;       // robust half extents along the axes
  Vec3d mid;        // robust extent midpoint (world)
  Vec3d skew;       // third standardized moment along the axes
  double rms = 1.0;  // RMS distance to the centroid
  bool degenerate = false;
};

inline CloudFrame cloud_frame(const std::vector<Vec3d>& pts) {
  if (pts.empty()) throw DomainError("cannot initialise from an empty cloud");
  CloudFrame f;
  f.centroid = centroid(pts);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  double ss = 0.0;
  for (const auto& p : pts) {
    const Vec3d d = p - f.centroid;
    const Eigen::Vector3d e(d.x, d.y, d.z);
    cov += e * e.transpose();
    ss += squared_norm(d);
  }
  f.rms = std::sqrt(ss / static_cast<double>(pts.size()));
  if (!(f.rms > 0.0)) f.rms = 1.0;
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  const Eigen::Vector3d ev = es.eigenvalues();
  f.degenerate = pts.size() < 4 || !(ev(2) > 0.0) || ev(0) <= 1e-12 * ev(2);
  if (f.degenerate) {
    f.axes = Mat3d::identity();
  } else {
    const Eigen::Matrix3d v = es.eigenvectors();
    Vec3d c0{v(0, 2), v(1, 2), v(2, 2)}, c1{v(0, 1), v(1, 1), v(2, 1)};
    c0 = detail::canonical_sign(c0);
    c1 = detail::canonical_sign(c1);
    f.axes = Mat3d::from_columns(c0, c1, cross(c0, c1));
  }
  // Robust extents: 1st and 99th percentiles of the projections.
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> proj;
    proj.reserve(pts.size());
    const Vec3d axis = f.axes.column(k);
    for (const auto& p : pts) proj.push_back(dot(p - f.centroid, axis));
    std::sort(proj.begin(), proj.end());
    const auto at = [&](double q) { return proj[static_cast<std::size_t>(std::llround(q * (proj.size() - 1)))]; };
    const double lo = at(0.01), hi = at(0.99);
    f.half[k] = std::max(0.5 * (hi - lo), 1e-9);
    f.mid[k] = 0.5 * (hi + lo);
    double m2 = 0.0, m3 = 0.0;
    for (double v : proj) {
      m2 += v * v;
      m3 += v * v * v;
    }
    m2 /= static_cast<double>(proj.size());
    m3 /= static_cast<double>(proj.size());
    f.skew[k] = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
  }
  f.mid = f.centroid + f.axes * f.mid;
  return f;
}

namespace detail {

// Rotation whose local x and z columns are the given directions.
inline Mat3d frame_xz(const Vec3d& x, const Vec3d& z) { return Mat3d::from_columns(x, cross(z, x), z); }

// Deterministic structured guesses per template: the moment guess first,
// followed by alternative assignments of local axes to principal axes.
inline std::vector<InitGuess> structured_guesses(const AotTemplate& t, const CloudFrame& f) {
  const Vec3d e1 = f.axes.column(0), e2 = f.axes.column(1), e3 = f.axes.column(2);
  const double E1 = f.half.x, E2 = f.half.y, E3 = f.half.z;
  std::vector<InitGuess> g;
  switch (t.shape) {
    case Shape::Cuboid: g.push_back({{E1, E2, E3}, {f.axes, f.centroid}}); break;
    case Shape::Cylinder: {
      InitGuess along{{0.5 * (E2 + E3), E1}, {frame_xz(e2, e1), f.centroid}};
      InitGuess flat{{0.5 * (E1 + E2), E3}, {frame_xz(e1, e3), f.centroid}};
      InitGuess mid{{0.5 * (E1 + E3), E2}, {frame_xz(e3, e2), f.centroid}};
      // A bar has two similar short extents, a disk two similar long ones.
      if (std::abs(E2 - E3) <= std::abs(E1 - E2)) g = {along, flat, mid};
      else g = {flat, along, mid};
      break;
    }
    case Shape::Ring: {
      const auto ring_guess = [&](double a, double b, double c, const Vec3d& x, const Vec3d& z) {
        const double tube = c;
        return InitGuess{{std::max(0.5 * (a + b) - tube, tube), tube}, {frame_xz(x, z), f.centroid}};
      };
      g = {ring_guess(E1, E2, E3, e1, e3), ring_guess(E1, E3, E2, e1, e2), ring_guess(E2, E3, E1, e2, e1)};
      break;
    }
    case Shape::Handle: {
      // Local y is the thin direction; the stem runs along local z.
      for (const auto& [x, z, ex, ez] :
           {std::tuple{e2, e1, E2, E1}, std::tuple{e2, -e1, E2, E1}, std::tuple{e1, e2, E1, E2},
            std::tuple{e1, -e2, E1, E2}}) {
        const double tube = std::max(E3, 1e-3);
        const double big = std::max(ex - tube, tube);
        const double h = std::max(ez - big - tube, 0.1 * ez);
        const double half_height = h + big + tube;
        g.push_back({{big, tube, h}, {frame_xz(x, z), f.mid - z * half_height}});
      }
      break;
    }
    case Shape::Lever: {
      // Bar long axis along local x; the hub stands on the +z face, so the
      // cloud is skewed towards +z. Skew-preferred signs come first.
      const Vec3d axes[3] = {e1, e2, e3};
      const double half[3] = {E1, E2, E3};
      const double skew[3] = {f.skew.x, f.skew.y, f.skew.z};
      std::vector<InitGuess> flipped;
      for (const auto& [ix, iz, iy] : {std::tuple{0, 2, 1}, std::tuple{1, 2, 0}, std::tuple{0, 1, 2}, std::tuple{1, 0, 2}}) {
        const double c = 0.5 * half[iz], h = 0.5 * half[iz], r = 0.5 * half[iy];
        const Vec3d z = skew[iz] < 0.0 ? -axes[iz] : axes[iz];
        // The z extent spans [-c, c + 2h]; centre it on the cloud midpoint.
        g.push_back({{half[ix], half[iy], c, r, h}, {frame_xz(axes[ix], z), f.mid - z * h}});
        flipped.push_back({{half[ix], half[iy], c, r, h}, {frame_xz(axes[ix], -z), f.mid + z * h}});
      }
      g.insert(g.end(), flipped.begin(), flipped.end());
      break;
    }
    default: throw DomainError("template '" + t.id + "' cannot be fitted to a point cloud");
  }
  if (f.degenerate)
    for (auto& x : g) x.pose.rotation = Mat3d::identity();
  for (auto& x : g) project_params(t, x.params);
  return g;
}

}  // namespace detail

// `starts` initial (params, pose) guesses. The first is the moment guess; the
// next ones are the template's alternative axis assignments; the rest perturb
// those (rotation by up to 30 degrees about a random axis, each parameter by
// a log-uniform factor of up to 1.5).
inline std::vector<InitGuess> init_guesses(const AotTemplate& t, const PointCloud& cloud, std::size_t starts,
                                           std::uint64_t seed, bool* degenerate = nullptr) {
  if (starts < 1) throw DomainError("init_guesses needs starts >= 1");
  if (!t.is_geometric()) throw DomainError("kinematic template '" + t.id + "' cannot be fitted to a point cloud");
  const CloudFrame f = cloud_frame(cloud.points);
  if (degenerate) *degenerate = f.degenerate;
  const auto base = detail::structured_guesses(t, f);
  std::vector<InitGuess> out;
  for (std::size_t i = 0; i < base.size() && out.size() < starts; ++i) out.push_back(base[i]);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nrm(0.0, 1.0);
  for (std::size_t k = 0; out.size() < starts; ++k) {
    InitGuess g = base[k % base.size()];
    Vec3d axis{nrm(rng), nrm(rng), nrm(rng)};
    if (norm(axis) < 1e-9) axis = {0, 0, 1};
    const double angle = (kPi / 6) * u(rng);
    g.pose.rotation = rotation_about(axis, angle) * g.pose.rotation;
    for (auto& p : g.params) p *= std::exp(std::log(1.5) * (2 * u(rng) - 1));
    project_params(t, g.params);
    out.push_back(g);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

namespace detail {

// Normalized loss below which a run counts as an exact fit (RMS residual
// around 1e-7 of the cloud radius).
inline constexpr double kLossFloor = 1e-14;

// Bounds-projected Adam-style descent on z = (params, translation, omega)
// with pose = (exp(omega) R0, translation), in normalized cloud coordinates.
// A trial step is accepted only if it lowers the loss; a rejected step
// multiplies the step size by the decay factor.
template <std::size_t NP>
class Descent {
public:
  static constexpr std::size_t K = NP + 6;
  using D = Dual<K>;
  using Vec = std::array<double, K>;

  Descent(const AotTemplate& t, const LossContext& ctx, const FitConfig& cfg, double scale)
      : t_(t), ctx_(ctx), cfg_(cfg) {
    for (std::size_t i = 0; i < NP; ++i) {
      lo_[i] = t.schema[i].lower / scale;
      hi_[i] = t.schema[i].upper / scale;
    }
  }

  struct Run {
    Vec z{};
    Mat3d r0 = Mat3d::identity();
    double loss = std::numeric_limits<double>::infinity();
    Vec grad{};
    Vec m{}, v{};
    double step = 0.0;
    std::size_t iterations = 0;
    std::size_t adam_t = 0;
    std::vector<double> history;
    bool done = false;
  };

  Run start(const std::vector<double>& params, const Pose& pose) const {
    Run r;
    for (std::size_t i = 0; i < NP; ++i) r.z[i] = params[i];
    for (std::size_t i = 0; i < 3; ++i) r.z[NP + i] = pose.translation[i];
    r.r0 = pose.rotation;
    project(r.z);
    r.loss = evaluate(r.z, r.r0, r.grad);
    r.step = cfg_.base_step;
    r.history.push_back(r.loss);
    if (!std::isfinite(r.loss)) r.done = true;
    return r;
  }

  // Re-evaluates a run (possibly advanced under another context) on this
  // optimizer's context and restarts its convergence window.
  void rebase(Run& r) const {
    r.loss = evaluate(r.z, r.r0, r.grad);
    r.history.assign(1, r.loss);
    r.done = !std::isfinite(r.loss);
  }

  // Advances a run by up to `budget` iterations; `active` masks the
  // variables allowed to move.
  void advance(Run& r, std::size_t budget, const std::array<bool, K>& active) const {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-12;
    for (std::size_t it = 0; it < budget && !r.done; ++it) {
      ++r.iterations;
      ++r.adam_t;
      Vec trial = r.z;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(r.adam_t));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(r.adam_t));
      Vec m = r.m, v = r.v;
      for (std::size_t i = 0; i < K; ++i) {
        if (!active[i]) continue;
        m[i] = b1 * m[i] + (1 - b1) * r.grad[i];
        v[i] = b2 * v[i] + (1 - b2) * r.grad[i] * r.grad[i];
        trial[i] -= r.step * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
      project(trial);
      Vec g{};
      const double loss = evaluate(trial, r.r0, g);
      r.m = m;
      r.v = v;
      if (std::isfinite(loss) && loss < r.loss) {
        r.z = trial;
        r.loss = loss;
        r.grad = g;
        r.step = std::min(cfg_.base_step, r.step * 1.2);
        r.history.push_back(loss);
        const std::size_t w = cfg_.window;
        if (r.loss <= kLossFloor) r.done = true;
        if (r.history.size() > w) {
          const double old = r.history[r.history.size() - 1 - w];
          if ((old - r.loss) <= cfg_.tolerance * std::max(old, 1e-300)) r.done = true;
        }
      } else {
        r.step *= cfg_.step_decay;
        if (r.step < 1e-12) r.done = true;
      }
    }
  }

  static std::array<bool, K> all_active() {
    std::array<bool, K> a;
    a.fill(true);
    return a;
  }

  Pose pose_of(const Run& r) const {
    const Vec3d w{r.z[NP + 3], r.z[NP + 4], r.z[NP + 5]};
    return {orthonormalize(exp_so3(w) * r.r0), {r.z[NP], r.z[NP + 1], r.z[NP + 2]}};
  }

  std::vector<double> params_of(const Run& r) const { return {r.z.begin(), r.z.begin() + NP}; }

private:
  void project(Vec& z) const {
    std::vector<double> p(z.begin(), z.begin() + NP);
    for (std::size_t i = 0; i < NP; ++i) p[i] = std::clamp(p[i], lo_[i], hi_[i]);
    if ((t_.shape == Shape::Ring || t_.shape == Shape::Handle) && p[1] > p[0]) p[1] = p[0];
    std::copy(p.begin(), p.end(), z.begin());
  }

  double evaluate(const Vec& z, const Mat3d& r0, Vec& grad) const {
    std::array<D, K> vars;
    for (std::size_t i = 0; i < K; ++i) vars[i] = D::variable(z[i], i);
    const Vec3<D> w{vars[NP + 3], vars[NP + 4], vars[NP + 5]};
    const BasicPose<D> pose{exp_so3(w) * Mat3<D>::cast(r0), {vars[NP], vars[NP + 1], vars[NP + 2]}};
    const D l = loss_value<D>(ctx_, std::span<const D>(vars.data(), NP), pose);
    grad = l.partials();
    return l.value();
  }

  const AotTemplate& t_;
  const LossContext& ctx_;
  const FitConfig& cfg_;
  std::array<double, NP> lo_{}, hi_{};
};

// Parameter indices each composite child depends on.
inline std::vector<std::vector<std::size_t>> child_param_sets(Shape s) {
  switch (s) {
    case Shape::Handle: return {{0, 1}, {1, 2}};
    case Shape::Lever: return {{0, 1, 2}, {3, 4}};
    default: return {};
  }
}

inline std::vector<std::size_t> subsample_indices(std::size_t n, std::size_t max_points, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n <= max_points) return idx;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(max_points);
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct RawFit {
  std::vector<double> params;  // normalized units
  Pose pose;                   // normalized frame
  std::vector<StartTrace> traces;
};

template <std::size_t NP>
RawFit descend(const AotTemplate& t, const std::vector<Vec3d>& pts, const std::vector<InitGuess>& guesses,
               const FitConfig& cfg, double scale, double margin) {
  const KdTree tree(pts);
  LossContext ctx{t.shape, pts, {}, &tree, cfg.lambda_cov, margin, kCoverageCapFactor * margin};
  using Opt = Descent<NP>;
  const auto active = Opt::all_active();
  std::vector<typename Opt::Run> runs(guesses.size());
  std::vector<std::vector<SurfaceCoord>> covers(guesses.size());
  // Each start freezes its coverage coordinates at its initial parameters.
  const auto with_cover = [&](std::size_t i) {
    LossContext c = ctx;
    c.coverage = covers[i];
    return c;
  };
  // Screening uses a smaller subset of the cloud and of the coverage
  // samples; the coverage distances still see the whole cloud.
  const auto screen_idx = subsample_indices(pts.size(), cfg.screen_points, cfg.seed ^ 0x27d4eb2fULL);
  std::vector<Vec3d> screen_pts;
  for (auto i : screen_idx) screen_pts.push_back(pts[i]);
  std::vector<LossContext> ctxs(guesses.size()), screen_ctxs(guesses.size());
  for (std::size_t i = 0; i < guesses.size(); ++i) {
    AotInstance probe{t.id, guesses[i].params, Pose::identity()};
    covers[i] = cfg.lambda_cov > 0.0 ? coverage_coords(probe, cfg.coverage_samples, cfg.seed + 7919 * (i + 1))
                                     : std::vector<SurfaceCoord>{};
    ctxs[i] = with_cover(i);
    screen_ctxs[i] = ctxs[i];
    screen_ctxs[i].points = screen_pts;
    std::vector<SurfaceCoord> sc;
    for (auto j : subsample_indices(covers[i].size(), cfg.screen_points, cfg.seed + 104729 * (i + 1)))
      sc.push_back(covers[i][j]);
    screen_ctxs[i].coverage = std::move(sc);
  }
  std::vector<std::unique_ptr<Opt>> opts(guesses.size()), screen_opts(guesses.size());
  for (std::size_t i = 0; i < guesses.size(); ++i) {
    opts[i] = std::make_unique<Opt>(t, ctxs[i], cfg, scale);
    screen_opts[i] = std::make_unique<Opt>(t, screen_ctxs[i], cfg, scale);
  }
  const std::size_t screen = std::min(cfg.screen_iterations, cfg.max_iterations);
  parallel_for(guesses.size(), cfg.jobs, [&](std::size_t i) {
    runs[i] = screen_opts[i]->start(guesses[i].params, guesses[i].pose);
    screen_opts[i]->advance(runs[i], screen, active);
    opts[i]->rebase(runs[i]);
  });
  std::vector<std::size_t> order(guesses.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double la = std::isfinite(runs[a].loss) ? runs[a].loss : std::numeric_limits<double>::infinity();
    const double lb = std::isfinite(runs[b].loss) ? runs[b].loss : std::numeric_limits<double>::infinity();
    return la < lb;
  });
  const std::size_t keep = std::min(cfg.refine_starts, order.size());
  parallel_for(keep, cfg.jobs, [&](std::size_t k) {
    const std::size_t i = order[k];
    if (std::isfinite(runs[i].loss)) opts[i]->advance(runs[i], cfg.max_iterations - screen, active);
  });
  // Composite refinement of the leading run: each child's parameters in
  // turn, pose frozen.
  const auto sets = child_param_sets(t.shape);
  std::size_t lead = order[0];
  for (std::size_t k = 1; k < keep; ++k)
    if (runs[order[k]].loss < runs[lead].loss) lead = order[k];
  if (!sets.empty() && std::isfinite(runs[lead].loss)) {
    auto& run = runs[lead];
    for (std::size_t pass = 0; pass < cfg.composite_passes; ++pass)
      for (const auto& set : sets) {
        std::array<bool, Opt::K> mask{};
        for (auto j : set) mask[j] = true;
        run.done = false;
        run.step = cfg.base_step;
        run.history.assign(1, run.loss);
        opts[lead]->advance(run, cfg.child_iterations, mask);
      }
  }
  RawFit out;
  std::size_t best = guesses.size();
  for (std::size_t i = 0; i < guesses.size(); ++i) {
    out.traces.push_back({i, runs[i].loss * scale * scale, runs[i].iterations});
    if (!std::isfinite(runs[i].loss)) continue;
    if (best == guesses.size() || runs[i].loss < runs[best].loss) best = i;
  }
  if (best == guesses.size()) {
    nlohmann::json tr = nlohmann::json::array();
    for (const auto& s : out.traces) tr.push_back({{"start", s.start}, {"loss", s.loss}});
    throw OptimizationError("all starts diverged for template '" + t.id + "'", tr.dump());
  }
  out.params = opts[best]->params_of(runs[best]);
  out.pose = opts[best]->pose_of(runs[best]);
  return out;
}

}  // namespace detail

inline FitResult fit_parameters(const AotTemplate& t, const PointCloud& cloud, const FitConfig& cfg = {}) {
  validate_fit_config(cfg);
  if (cloud.empty()) throw DomainError("fit_parameters needs a non-empty cloud");
  if (!t.is_geometric()) throw DomainError("kinematic template '" + t.id + "' cannot be fitted to a point cloud");
  FitResult res;
  const auto guesses = init_guesses(t, cloud, cfg.starts, cfg.seed, &res.degenerate_init);
  const CloudFrame frame = cloud_frame(cloud.points);
  const double s = frame.rms;
  const Vec3d c = frame.centroid;
  res.scale = s;
  // Normalized coordinates: (x - c) / s.
  std::vector<Vec3d> pts;
  for (auto i : detail::subsample_indices(cloud.size(), cfg.max_points, cfg.seed ^ 0x5bd1e995ULL))
    pts.push_back((cloud.points[i] - c) / s);
  std::vector<InitGuess> ng;
  for (const auto& g : guesses) {
    InitGuess n{g.params, {g.pose.rotation, (g.pose.translation - c) / s}};
    for (auto& p : n.params) p /= s;
    ng.push_back(n);
  }
  // The dead zone comes from the full cloud so that descent and the final
  // loss agree on it.
  const double margin = sampling_radius(KdTree(cloud.points)) / s;
  detail::RawFit raw;
  switch (t.schema.size()) {
    case 2: raw = detail::descend<2>(t, pts, ng, cfg, s, margin); break;
    case 3: raw = detail::descend<3>(t, pts, ng, cfg, s, margin); break;
    case 5: raw = detail::descend<5>(t, pts, ng, cfg, s, margin); break;
    default: throw DomainError("unsupported parameter count for template '" + t.id + "'");
  }
  AotInstance inst{t.id, raw.params, {raw.pose.rotation, raw.pose.translation * s + c}};
  for (auto& p : inst.params) p *= s;
  project_params(t, inst.params);
  res.instance = canonicalize(inst);
  res.traces = raw.traces;
  res.loss = point_to_surface_loss(res.instance, cloud, cfg.lambda_cov, cfg.coverage_samples, cfg.seed);
  res.normalized_loss = res.loss / (s * s);
  double sum = 0.0;
  for (const auto& p : cloud.points) {
    const double d = surface_distance(res.instance, p);
    sum += d;
    res.max_residual = std::max(res.max_residual, d);
  }
  res.mean_residual = sum / static_cast<double>(cloud.size());
  return res;
}

inline FitResult fit_parameters(const std::string& template_id, const PointCloud& cloud, const FitConfig& cfg = {}) {
  return fit_parameters(find_template(template_id), cloud, cfg);
}

// ---------------------------------------------------------------------------
// Identification

struct RankedFit {
  std::string template_id;
  std::optional<FitResult> fit;
  double score = std::numeric_limits<double>::infinity();
  std::string error;  // set when the fit failed
};

struct IdentificationResult {
  std::vector<RankedFit> ranking;
  // Every score above the confidence threshold, or too few / coplanar
  // points to pin down a pose.
  bool low_confidence = false;

  const RankedFit& best() const {
    if (ranking.empty()) throw LookupError("identification produced no candidates");
    return ranking.front();
  }
};

struct IdentifyConfig {
  FitConfig fit;
  double lambda_model = 1e-4;
  double confidence_threshold = 1e-2;
};

// Score of a fit: scale-free loss plus a complexity penalty over all free
// parameters (schema entries and the six pose degrees of freedom).
inline double model_score(const FitResult& f, const AotTemplate& t, double lambda_model) {
  return f.normalized_loss + lambda_model * static_cast<double>(t.schema.size() + 6);
}

inline IdentificationResult identify_ontology(const PointCloud& cloud, const std::vector<std::string>& candidates,
                                              const IdentifyConfig& cfg = {}) {
  if (candidates.empty()) throw DomainError("identify_ontology needs at least one candidate template");
  for (const auto& id : candidates)
    if (!find_template(id).is_geometric()) throw DomainError("candidate '" + id + "' is not a geometric template");
  IdentificationResult out;
  out.ranking.resize(candidates.size());
  FitConfig inner = cfg.fit;
  inner.jobs = 1;
  parallel_for(candidates.size(), cfg.fit.jobs, [&](std::size_t i) {
    RankedFit& r = out.ranking[i];
    r.template_id = candidates[i];
    const AotTemplate& t = find_template(candidates[i]);
    try {
      r.fit = fit_parameters(t, cloud, inner);
      r.score = model_score(*r.fit, t, cfg.lambda_model);
      if (!std::isfinite(r.score)) r.score = std::numeric_limits<double>::infinity();
    } catch (const Error& e) {
      r.error = e.what();
      r.fit.reset();
    }
  });
  // Ascending score; ties by registry order.
  std::stable_sort(out.ranking.begin(), out.ranking.end(), [](const RankedFit& a, const RankedFit& b) {
    if (a.score != b.score) return a.score < b.score;
    return registry_index(a.template_id) < registry_index(b.template_id);
  });
  out.low_confidence = cloud_frame(cloud.points).degenerate ||
                       std::all_of(out.ranking.begin(), out.ranking.end(),
                                   [&](const RankedFit& r) { return !(r.score <= cfg.confidence_threshold); });
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json fit_config_to_json(const FitConfig& c) {
  return {{"starts", c.starts},
          {"max_iterations", c.max_iterations},
          {"base_step", c.base_step},
          {"step_decay", c.step_decay},
          {"tolerance", c.tolerance},
          {"window", c.window},
          {"lambda_cov", c.lambda_cov},
          {"coverage_samples", c.coverage_samples},
          {"seed", c.seed},
          {"screen_iterations", c.screen_iterations},
          {"screen_points", c.screen_points},
          {"refine_starts", c.refine_starts},
          {"max_points", c.max_points},
          {"composite_passes", c.composite_passes},
          {"child_iterations", c.child_iterations}};
}

inline FitConfig fit_config_from_json(const nlohmann::json& j, FitConfig c = {}) {
  if (!j.is_object()) throw ParseError("fit config must be an object");
  for (const auto& [k, v] : j.items()) {
    try {
      if (k == "starts") c.starts = v.get<std::size_t>();
      else if (k == "max_iterations") c.max_iterations = v.get<std::size_t>();
      else if (k == "base_step") c.base_step = v.get<double>();
      else if (k == "step_decay") c.step_decay = v.get<double>();
      else if (k == "tolerance") c.tolerance = v.get<double>();
      else if (k == "window") c.window = v.get<std::size_t>();
      else if (k == "lambda_cov") c.lambda_cov = v.get<double>();
      else if (k == "coverage_samples") c.coverage_samples = v.get<std::size_t>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "screen_iterations") c.screen_iterations = v.get<std::size_t>();
      else if (k == "screen_points") c.screen_points = v.get<std::size_t>();
      else if (k == "refine_starts") c.refine_starts = v.get<std::size_t>();
      else if (k == "max_points") c.max_points = v.get<std::size_t>();
      else if (k == "composite_passes") c.composite_passes = v.get<std::size_t>();
      else if (k == "child_iterations") c.child_iterations = v.get<std::size_t>();
      else throw ParseError("fit." + k + ": unknown key");
    } catch (const nlohmann::json::exception&) {
      throw ParseError("fit." + k + ": wrong value type");
    }
  }
  validate_fit_config(c);
  return c;
}

inline nlohmann::json fit_result_to_json(const FitResult& r) {
  nlohmann::json traces = nlohmann::json::array();
  for (const auto& t : r.traces) traces.push_back({{"start", t.start}, {"loss", t.loss}, {"iterations", t.iterations}});
  return {{"instance", instance_to_json(r.instance)},
          {"loss", r.loss},
          {"normalized_loss", r.normalized_loss},
          {"scale", r.scale},
          {"mean_residual", r.mean_residual},
          {"max_residual", r.max_residual},
          {"degenerate_init", r.degenerate_init},
          {"traces", traces}};
}

}  // namespace aot
