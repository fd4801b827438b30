#pragma once

// Motion analysis of observation pairs: which points moved, the rigid
// transform they underwent, and its screw (Chasles) decomposition.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aot/cloud.hpp"
#include "aot/errors.hpp"
#include "aot/geometry.hpp"
#include "aot/joint.hpp"
#include "aot/kdtree.hpp"

namespace aot {

struct KinematicThresholds {
  double theta_min = 0.05;  // radians
  double d_min = 0.01;      // length units
};

// ---------------------------------------------------------------------------
// Segmentation

struct SegmentMask {
  std::vector<char> moving;  // one flag per initial-cloud point
  double mean_moving = 0.0, max_moving = 0.0;
  double mean_static = 0.0, max_static = 0.0;
  bool approximate = false;  // displacements came from nearest neighbours

  std::size_t moving_count() const { return static_cast<std::size_t>(std::count(moving.begin(), moving.end(), 1)); }
  std::vector<std::size_t> moving_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < moving.size(); ++i)
      if (moving[i]) idx.push_back(i);
    return idx;
  }
};

inline constexpr double kDefaultSegmentThreshold = 0.02;

// Per-point displacement between the two states: exact for corresponding
// pairs, distance to the nearest final point otherwise.
inline std::vector<double> point_displacements(const CloudPair& pair, bool& approximate) {
  std::vector<double> d(pair.initial.size());
  approximate = !(pair.corresponding && pair.initial.size() == pair.final.size());
  if (!approximate) {
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = norm(pair.final.points[i] - pair.initial.points[i]);
    return d;
  }
  if (pair.final.empty()) throw DomainError("pair has an empty final cloud");
  const KdTree tree(pair.final.points);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::sqrt(tree.nearest(pair.initial.points[i]).sq_dist);
  return d;
}

inline SegmentMask segment_moving_part(const CloudPair& pair, double tau = kDefaultSegmentThreshold) {
  if (pair.initial.empty() || pair.final.empty()) throw DomainError("segment_moving_part needs non-empty clouds");
  if (pair.corresponding && pair.initial.size() != pair.final.size())
    throw DomainError("corresponding pair has clouds of different length");
  SegmentMask m;
  const auto d = point_displacements(pair, m.approximate);
  m.moving.assign(d.size(), 0);
  std::size_t nm = 0, ns = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] > tau) {
      m.moving[i] = 1;
      m.mean_moving += d[i];
      m.max_moving = std::max(m.max_moving, d[i]);
      ++nm;
    } else {
      m.mean_static += d[i];
      m.max_static = std::max(m.max_static, d[i]);
      ++ns;
    }
  }
  if (nm) m.mean_moving /= static_cast<double>(nm);
  if (ns) m.mean_static /= static_cast<double>(ns);
  return m;
}

// ---------------------------------------------------------------------------
// Rigid registration

struct RigidFit {
  Pose motion;
  double rms = 0.0;
};

// Least-squares rigid transform taking src[i] to dst[i] (cross-covariance
// SVD with reflection correction).
inline RigidFit estimate_rigid(std::span<const Vec3d> src, std::span<const Vec3d> dst) {
  if (src.size() != dst.size()) throw DomainError("estimate_rigid needs equally many source and target points");
  if (src.size() < 3) throw RankError("estimate_rigid needs at least 3 correspondences");
  const auto n = static_cast<double>(src.size());
  Vec3d cs{}, cd{};
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs = cs / n;
  cd = cd / n;
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero(), scatter = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3d a = src[i] - cs, b = dst[i] - cd;
    const Eigen::Vector3d ea(a.x, a.y, a.z), eb(b.x, b.y, b.z);
    h += ea * eb.transpose();
    scatter += ea * ea.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(scatter);
  const Eigen::Vector3d ev = es.eigenvalues();  // ascending
  if (!(ev(2) > 0.0) || ev(1) <= 1e-12 * ev(2)) throw RankError("correspondences are collinear or coincident");
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d u = svd.matrixU(), v = svd.matrixV();
  Eigen::Matrix3d corr = Eigen::Matrix3d::Identity();
  corr(2, 2) = (v * u.transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Eigen::Matrix3d r = v * corr * u.transpose();
  Mat3d rot;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) rot(i, j) = r(i, j);
  rot = orthonormalize(rot);
  RigidFit fit{{rot, cd - rot * cs}, 0.0};
  double ss = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) ss += squared_norm(fit.motion.apply(src[i]) - dst[i]);
  fit.rms = std::sqrt(ss / n);
  return fit;
}

struct RobustRigidConfig {
  std::size_t iterations = 256;
  double inlier_threshold = 0.05;  // residual bound for consensus, length units
  std::uint64_t seed = 0;
};

// Consensus registration for correspondences contaminated by outliers:
// minimal 3-point hypotheses, the largest consensus set wins (ties to the
// lower residual sum), then least squares on that set.
inline RigidFit estimate_rigid_robust(std::span<const Vec3d> src, std::span<const Vec3d> dst,
                                      const RobustRigidConfig& cfg = {}) {
  if (src.size() != dst.size()) throw DomainError("estimate_rigid needs equally many source and target points");
  const std::size_t n = src.size();
  if (n < 3) throw RankError("estimate_rigid needs at least 3 correspondences");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const double thr2 = cfg.inlier_threshold * cfg.inlier_threshold;
  std::size_t best_count = 0;
  double best_cost = 0.0;
  std::optional<Pose> best;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const std::size_t i = pick(rng), j = pick(rng), k = pick(rng);
    const std::array<Vec3d, 3> a{src[i], src[j], src[k]}, b{dst[i], dst[j], dst[k]};
    RigidFit hyp;
    try {
      hyp = estimate_rigid(a, b);
    } catch (const RankError&) {
      continue;
    }
    std::size_t count = 0;
    double cost = 0.0;
    for (std::size_t q = 0; q < n; ++q) {
      const double e = squared_norm(hyp.motion.apply(src[q]) - dst[q]);
      if (e <= thr2) {
        ++count;
        cost += e;
      }
    }
    if (count > best_count || (count == best_count && count > 0 && cost < best_cost)) {
      best_count = count;
      best_cost = cost;
      best = hyp.motion;
    }
  }
  if (!best || best_count < 3) return estimate_rigid(src, dst);
  // Two refinement rounds: refit on the consensus set, recompute it.
  Pose current = *best;
  RigidFit fit;
  for (int round = 0; round < 2; ++round) {
    std::vector<Vec3d> a, b;
    for (std::size_t q = 0; q < n; ++q)
      if (squared_norm(current.apply(src[q]) - dst[q]) <= thr2) {
        a.push_back(src[q]);
        b.push_back(dst[q]);
      }
    if (a.size() < 3) break;
    fit = estimate_rigid(a, b);
    current = fit.motion;
  }
  fit.motion = current;
  return fit;
}

// ---------------------------------------------------------------------------
// Screw decomposition

enum class ScrewKind { Revolute, Prismatic, General };

inline std::string to_string(ScrewKind k) {
  switch (k) {
    case ScrewKind::Revolute: return "revolute";
    case ScrewKind::Prismatic: return "prismatic";
    default: return "general";
  }
}

// Rotation by `angle` about the line through `pivot` along unit `axis`,
// followed by translation `translation` along the axis.
struct ScrewMotion {
  ScrewKind kind = ScrewKind::Revolute;
  Vec3d axis{0, 0, 1};
  Vec3d pivot{};
  double angle = 0.0;
  double translation = 0.0;
};

inline Pose screw_recompose(const ScrewMotion& s) {
  const Mat3d r = rotation_about(s.axis, s.angle);
  return {r, s.pivot - r * s.pivot + s.axis * s.translation};
}

namespace detail {

inline bool first_component_negative(const Vec3d& v) {
  for (std::size_t i = 0; i < 3; ++i)
    if (std::abs(v[i]) > 1e-9) return v[i] < 0;
  return false;
}

inline ScrewKind classify_screw(double angle, double d, const KinematicThresholds& th) {
  const bool rot = std::abs(angle) >= th.theta_min;
  const bool tra = std::abs(d) >= th.d_min;
  if (rot && tra) return ScrewKind::General;
  if (rot) return ScrewKind::Revolute;
  if (tra) return ScrewKind::Prismatic;
  // Below both thresholds: name the relatively larger component.
  return std::abs(angle) / th.theta_min >= std::abs(d) / th.d_min ? ScrewKind::Revolute : ScrewKind::Prismatic;
}

}  // namespace detail

// Rotations below this angle (radians) are dropped when the motion also
// translates.
inline constexpr double kSmallScrewAngle = 1e-6;

inline ScrewMotion screw_decompose(const Pose& motion, const KinematicThresholds& th = {}) {
  if (!is_valid_pose(motion)) throw DomainError("screw_decompose needs a rigid transform");
  const Mat3d& r = motion.rotation;
  const Vec3d& t = motion.translation;
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Vec3d w{(r(2, 1) - r(1, 2)) / 2, (r(0, 2) - r(2, 0)) / 2, (r(1, 0) - r(0, 1)) / 2};  // sin(theta) u
  const double s = norm(w);
  double theta = std::atan2(s, c);
  ScrewMotion out;
  if (theta == 0.0 || (s == 0.0 && c > 0.0)) {
    if (norm(t) == 0.0) throw NoMotionError("identity motion has no screw axis");
    theta = 0.0;
    out.axis = normalized(t);
  } else if (theta < kSmallScrewAngle && norm(t) > 0.0) {
    // The axis of a tiny rotation is numerically meaningless next to a
    // translation; report the translation alone.
    theta = 0.0;
    out.axis = normalized(t);
  } else if (c < -0.5) {
    // Near a half turn sin(theta) is small; read u from the symmetric part
    // (R + R^T)/2 - cos(theta) I = (1 - cos(theta)) u u^T.
    Mat3d sym;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) sym(i, j) = (r(i, j) + r(j, i)) / 2 - (i == j ? c : 0.0);
    int k = 0;
    for (int i = 1; i < 3; ++i)
      if (sym(i, i) > sym(k, k)) k = i;
    Vec3d u = normalized(sym.column(k));
    if (dot(u, w) < 0) u = -u;
    out.axis = u;
  } else {
    out.axis = w / s;
  }
  out.angle = theta;
  out.translation = dot(t, out.axis);
  const Vec3d tp = t - out.axis * out.translation;
  if (theta != 0.0) out.pivot = (tp + cross(out.axis, tp) / std::tan(theta / 2)) * 0.5;
  if (detail::first_component_negative(out.axis)) {
    out.axis = -out.axis;
    out.translation = -out.translation;
    // A half turn is its own inverse direction; keep the angle positive.
    if (std::abs(out.angle) < kPi) out.angle = -out.angle;
  }
  out.kind = detail::classify_screw(out.angle, out.translation, th);
  return out;
}

// ---------------------------------------------------------------------------
// Joint estimation

struct JointDiagnostics {
  double cosine_distance = 0.0;  // 1 - |u . u_gt|
  double pivot_distance = 0.0;   // distance of the true pivot to the estimated axis line
};

inline JointDiagnostics joint_errors(const KinematicParams& est, const KinematicParams& gt) {
  JointDiagnostics d;
  d.cosine_distance = std::max(0.0, 1.0 - std::abs(dot(est.axis, gt.axis)));
  if (gt.kind == JointKind::Revolute && est.kind == JointKind::Revolute)
    d.pivot_distance = point_line_distance(gt.pivot, est.pivot, est.axis);
  return d;
}

struct JointEstimate {
  KinematicParams joint;
  ScrewMotion screw;
  double rms = 0.0;
  bool approximate = false;  // correspondences came from nearest neighbours
  std::optional<JointDiagnostics> errors;
};

struct JointEstimateConfig {
  KinematicThresholds thresholds;
  RobustRigidConfig robust;
  bool use_robust = true;
};

// Kinematic parameters from a screw: the axis is oriented so the observed
// motion is a positive joint step, and the range is the observed
// displacement (lower = 0, upper = |angle| or the translation length).
inline KinematicParams joint_from_screw(const ScrewMotion& s) {
  KinematicParams k;
  if (s.kind == ScrewKind::Prismatic) {
    // A small residual rotation leaves the screw axis ill-defined; the
    // direction of the whole displacement is the better estimate.
    k.kind = JointKind::Prismatic;
    const Vec3d t = screw_recompose(s).translation;
    if (!(norm(t) > 0.0)) throw NoMotionError("observed joint displacement is zero");
    k.axis = normalized(t);
    k.upper = norm(t);
  } else {
    k.kind = JointKind::Revolute;
    const double sign = s.angle < 0 ? -1.0 : 1.0;
    k.axis = s.axis * sign;
    k.pivot = s.pivot;
    k.upper = std::abs(s.angle);
  }
  k.lower = 0.0;
  if (!(k.upper > 0.0)) throw NoMotionError("observed joint displacement is zero");
  return k;
}

namespace detail {

// Moving-part correspondences. Exact pairs use indices directly; otherwise
// final points that are far from every initial point are taken as the moved
// part and matched to the moving initial points by nearest neighbour after
// aligning centroids.
inline void moving_correspondences(const CloudPair& pair, const SegmentMask& mask, double tau,
                                   std::vector<Vec3d>& src, std::vector<Vec3d>& dst, bool& approximate) {
  const auto idx = mask.moving_indices();
  approximate = !(pair.corresponding && pair.initial.size() == pair.final.size());
  if (!approximate) {
    for (auto i : idx) {
      src.push_back(pair.initial.points[i]);
      dst.push_back(pair.final.points[i]);
    }
    return;
  }
  const KdTree init_tree(pair.initial.points);
  std::vector<Vec3d> moved;
  for (const auto& p : pair.final.points)
    if (std::sqrt(init_tree.nearest(p).sq_dist) > tau) moved.push_back(p);
  if (moved.empty() || idx.empty()) return;
  for (auto i : idx) src.push_back(pair.initial.points[i]);
  const Vec3d shift = centroid(moved) - centroid(src);
  const KdTree moved_tree(moved);
  for (const auto& p : src) dst.push_back(moved[moved_tree.nearest(p + shift).index]);
}

// Replaces `motion` by a pure translation when the rotation does not explain
// the correspondences better than a translation would. Both models are scored
// by their residual sums truncated at `bound` (so outliers cost the same under
// either) and compared by the Bayesian information criterion. A rotation about
// the long axis of a thin part is invisible under noise and would otherwise be
// read as a revolute joint.
inline Pose prefer_translation(std::span<const Vec3d> src, std::span<const Vec3d> dst, const Pose& motion,
                               double bound) {
  const std::size_t n = src.size();
  if (n < 3) return motion;
  const double b2 = bound * bound;
  // Translation: component-wise median, then two rounds of inlier means.
  Vec3d t;
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = dst[i][k] - src[i][k];
    std::nth_element(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(n / 2), c.end());
    t[k] = c[n / 2];
  }
  for (int round = 0; round < 2; ++round) {
    Vec3d sum{};
    std::size_t m = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (squared_norm(src[i] + t - dst[i]) <= b2) {
        sum += dst[i] - src[i];
        ++m;
      }
    if (m == 0) break;
    t = sum / static_cast<double>(m);
  }
  double cost_r = 0.0, cost_t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cost_r += std::min(squared_norm(motion.apply(src[i]) - dst[i]), b2);
    cost_t += std::min(squared_norm(src[i] + t - dst[i]), b2);
  }
  const double m = 3.0 * static_cast<double>(n);
  const Pose translation{Mat3d::identity(), t};
  if (cost_t <= 1e-24 * m) return translation;
  if (cost_r <= 0.0) return motion;
  return m * std::log(cost_t / cost_r) > 3.0 * std::log(m) ? motion : translation;
}

}  // namespace detail

inline JointEstimate estimate_joint(const CloudPair& pair, const SegmentMask& mask, const JointEstimateConfig& cfg = {},
                                    const std::optional<KinematicParams>& ground_truth = std::nullopt,
                                    double tau = kDefaultSegmentThreshold) {
  if (mask.moving.size() != pair.initial.size()) throw DomainError("segment mask does not match the initial cloud");
  std::vector<Vec3d> src, dst;
  JointEstimate est;
  detail::moving_correspondences(pair, mask, tau, src, dst, est.approximate);
  if (src.size() < 3) throw RankError("moving segment has fewer than 3 points");
  const RigidFit fit = cfg.use_robust ? estimate_rigid_robust(src, dst, cfg.robust) : estimate_rigid(src, dst);
  est.rms = fit.rms;
  const double bound = cfg.use_robust ? cfg.robust.inlier_threshold : std::numeric_limits<double>::infinity();
  est.screw = screw_decompose(detail::prefer_translation(src, dst, fit.motion, bound), cfg.thresholds);
  est.joint = joint_from_screw(est.screw);
  if (ground_truth) est.errors = joint_errors(est.joint, *ground_truth);
  return est;
}

// Joint type of the moving part of a pair from its relative rigid motion.
inline JointKind classify_kinematic(const CloudPair& pair, const KinematicThresholds& th = {},
                                    double tau = kDefaultSegmentThreshold) {
  const SegmentMask mask = segment_moving_part(pair, tau);
  if (mask.moving_count() == 0) throw NoMotionError("no point moved more than the segmentation threshold");
  std::vector<Vec3d> src, dst;
  bool approx = false;
  detail::moving_correspondences(pair, mask, tau, src, dst, approx);
  if (src.size() < 3) throw NoMotionError("too few moving points to measure a motion");
  const RobustRigidConfig rc;
  const Pose motion = detail::prefer_translation(src, dst, estimate_rigid_robust(src, dst, rc).motion, rc.inlier_threshold);
  const Mat3d& r = motion.rotation;
  const double angle = std::acos(std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0));
  if (angle >= th.theta_min) return JointKind::Revolute;
  if (norm(motion.translation) >= th.d_min) return JointKind::Prismatic;
  throw NoMotionError("relative motion is below both the rotation and translation thresholds");
}

}  // namespace aot
