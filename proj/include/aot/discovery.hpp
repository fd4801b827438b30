#pragma once

// End-to-end discovery on an observation pair, interaction planning, and
// kinematic-consistency evaluation against a ground-truth scene.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aot/affordance.hpp"
#include "aot/dataset.hpp"
#include "aot/fitter.hpp"
#include "aot/kinematics.hpp"
#include "aot/parallel.hpp"
#include "aot/renderer.hpp"

namespace aot {

struct DiscoveryConfig {
  IdentifyConfig identify;
  std::vector<std::string> candidates = geometric_template_ids();
  double segment_threshold = kDefaultSegmentThreshold;
  JointEstimateConfig joint;
  // Moving points must also follow the estimated motion to within this
  // residual (or 3x the registration RMS, whichever is larger).
  double consistency_threshold = 0.02;
  double max_opening = kDefaultGripperOpening;
  double min_lever_arm = 0.05;       // revolute grasps closer to the axis are skipped
  std::size_t grasp_selectors = 8;   // selectors k / n for k in [0, n)
};

struct DiscoveryResult {
  SegmentMask mask;                       // from the displacement threshold
  std::vector<std::size_t> part_indices;  // initial-cloud points used for fitting
  IdentificationResult identification;
  AotInstance instance;  // top-ranked geometric instance
  JointEstimate joint;
  Grasp grasp;           // world grasp pose
  ForceField force;      // kinematic affordance of the estimated joint
  Vec3d part_centroid;
};

struct InteractionPlan {
  Grasp grasp;
  std::vector<Pose> waypoints;  // waypoints[0] is the grasp pose
  KinematicParams joint;        // planned joint (estimated)
  double displacement = 0.0;    // planned joint displacement (rad or length)
};

enum class FailureReason { None, BadGrasp, OffManifold, InsufficientRange, DiscoveryError };

inline std::string to_string(FailureReason r) {
  switch (r) {
    case FailureReason::None: return "none";
    case FailureReason::BadGrasp: return "bad-grasp";
    case FailureReason::OffManifold: return "off-manifold";
    case FailureReason::InsufficientRange: return "insufficient-range";
    case FailureReason::DiscoveryError: return "discovery-error";
  }
  return "none";
}

struct EvalTolerances {
  double eps_grasp = 0.05;
  double eps_track = 0.05;
  double success_fraction = 0.8;
  double max_opening = kDefaultGripperOpening;
};

struct EvalOutcome {
  bool success = false;
  double fraction = 0.0;   // achieved share of the true joint range
  double deviation = 0.0;  // max waypoint distance from the true joint manifold
  double grasp_distance = 0.0;
  FailureReason reason = FailureReason::None;
};

// ---------------------------------------------------------------------------
// Discovery

// Picks the grasp whose grounded center is nearest `centroid`. For revolute
// joints, grasps within `min_lever_arm` of the axis cannot turn the part and
// are skipped. Ties go to the lower selector, then to affordance order.
inline Grasp select_grasp(const AotInstance& inst, const KinematicParams& joint, const Vec3d& centroid,
                          const DiscoveryConfig& cfg) {
  std::optional<Grasp> best;
  double best_d = std::numeric_limits<double>::infinity();
  const std::size_t n = std::max<std::size_t>(cfg.grasp_selectors, 1);
  for (std::size_t k = 0; k < n; ++k) {
    const double s = static_cast<double>(k) / static_cast<double>(n);
    for (const auto& aff : grasp_affordances(inst.tmpl())) {
      auto g = ground_grasp(inst, aff, s, cfg.max_opening);
      if (!g) continue;
      const Vec3d c = g->pose.translation;
      if (joint.kind == JointKind::Revolute && point_line_distance(c, joint.pivot, joint.axis) < cfg.min_lever_arm)
        continue;
      const double d = norm(c - centroid);
      if (d < best_d) {
        best_d = d;
        best = std::move(g);
      }
    }
  }
  if (!best) throw NoAffordanceError("no grasp of '" + inst.template_id + "' fits the gripper and the joint");
  return *best;
}

// Points of the initial cloud that moved (displacement above the threshold)
// and whose motion agrees with the estimated rigid motion better than with
// staying put. Removes outliers and jittered static points from the mask.
inline std::vector<std::size_t> consistent_moving_points(const CloudPair& pair, const SegmentMask& mask,
                                                         const Pose& motion, double threshold) {
  std::vector<std::size_t> out;
  const bool exact = pair.corresponding && pair.initial.size() == pair.final.size();
  std::optional<KdTree> tree;
  if (!exact) tree.emplace(pair.final.points);
  for (std::size_t i = 0; i < pair.initial.size(); ++i) {
    if (!mask.moving[i]) continue;
    const Vec3d x = pair.initial.points[i];
    const Vec3d moved = motion.apply(x);
    double r_move, r_stay;
    if (exact) {
      r_move = norm(moved - pair.final.points[i]);
      r_stay = norm(x - pair.final.points[i]);
    } else {
      r_move = std::sqrt(tree->nearest(moved).sq_dist);
      r_stay = std::sqrt(tree->nearest(x).sq_dist);
    }
    if (r_move <= threshold && r_move < r_stay) out.push_back(i);
  }
  return out;
}

inline DiscoveryResult discover(const CloudPair& pair, const DiscoveryConfig& cfg = {},
                                const std::optional<KinematicParams>& ground_truth = std::nullopt) {
  DiscoveryResult r;
  r.mask = segment_moving_part(pair, cfg.segment_threshold);
  if (r.mask.moving_count() == 0) throw NoMotionError("no point moved more than the segmentation threshold");
  r.joint = estimate_joint(pair, r.mask, cfg.joint, ground_truth, cfg.segment_threshold);
  const double thr = std::max(cfg.consistency_threshold, 3.0 * r.joint.rms);
  r.part_indices = consistent_moving_points(pair, r.mask, screw_recompose(r.joint.screw), thr);
  if (r.part_indices.size() < 4) r.part_indices = r.mask.moving_indices();
  const PointCloud part = pair.initial.subset(r.part_indices);
  r.part_centroid = centroid(part.points);
  r.identification = identify_ontology(part, cfg.candidates, cfg.identify);
  const RankedFit& top = r.identification.best();
  if (!top.fit) throw OptimizationError("every candidate template failed to fit the moving part", top.error);
  r.instance = top.fit->instance;
  r.grasp = select_grasp(r.instance, r.joint.joint, r.part_centroid, cfg);
  r.force = ForceField{r.joint.joint};
  return r;
}

// ---------------------------------------------------------------------------
// Planning

inline constexpr std::size_t kDefaultWaypoints = 32;

inline InteractionPlan plan_motion(const Grasp& grasp, const KinematicParams& joint, double target_fraction,
                                   std::size_t k_steps = kDefaultWaypoints) {
  if (!(target_fraction > 0.0 && target_fraction <= 1.0)) throw DomainError("target fraction must lie in (0, 1]");
  if (k_steps < 1) throw DomainError("a plan needs at least one step");
  validate_joint(joint);
  if (joint.kind == JointKind::Revolute && point_line_distance(grasp.pose.translation, joint.pivot, joint.axis) <= 1e-9)
    throw PlanningError("grasp lies on the revolute axis");
  InteractionPlan p;
  p.grasp = grasp;
  p.joint = joint;
  p.displacement = target_fraction * joint.range();
  p.waypoints.reserve(k_steps + 1);
  for (std::size_t k = 0; k <= k_steps; ++k) {
    const double q = p.displacement * static_cast<double>(k) / static_cast<double>(k_steps);
    p.waypoints.push_back(joint_displacement(joint, q) * grasp.pose);
  }
  return p;
}

// Hold-then-move plan: waypoints sweep the grasp along the estimated joint.
inline InteractionPlan plan_interaction(const DiscoveryResult& r, double target_fraction,
                                        std::size_t k_steps = kDefaultWaypoints) {
  return plan_motion(r.grasp, r.joint.joint, target_fraction, k_steps);
}

// ---------------------------------------------------------------------------
// Evaluation

namespace detail {

// Joint value, relative to the starting point x0, whose true trajectory
// point is closest to x.
inline double closest_joint_offset(const KinematicParams& gt, const Vec3d& x0, const Vec3d& x) {
  if (gt.kind == JointKind::Prismatic) return dot(x - x0, gt.axis);
  const Vec3d a = x0 - gt.pivot, b = x - gt.pivot;
  const Vec3d a_perp = a - gt.axis * dot(a, gt.axis), b_perp = b - gt.axis * dot(b, gt.axis);
  if (norm(a_perp) <= 1e-12 || norm(b_perp) <= 1e-12) return 0.0;
  return std::atan2(dot(gt.axis, cross(a_perp, b_perp)), dot(a_perp, b_perp));
}

}  // namespace detail

// Pure function of (plan, scene, tolerances). Waypoints are projected onto
// the true one-DOF trajectory of the grasped point, limited to the joint
// range; revolute offsets are unwrapped along the waypoint sequence.
inline EvalOutcome evaluate(const InteractionPlan& plan, const SceneSpec& scene, const EvalTolerances& tol = {}) {
  EvalOutcome out;
  const KinematicParams& gt = scene.joint;
  const AotInstance part = part_at_state(scene, scene.state_initial);
  const Vec3d x0 = plan.grasp.pose.translation;
  out.grasp_distance = surface_distance(part, x0);
  const bool grasp_ok = out.grasp_distance <= tol.eps_grasp && plan.grasp.width <= tol.max_opening;

  const double q_start = gt.lower + scene.state_initial * gt.range();
  double q_min = q_start, q_max = q_start;
  double offset = 0.0;
  Vec3d prev = x0;
  for (const Pose& w : plan.waypoints) {
    const Vec3d x = w.translation;
    if (gt.kind == JointKind::Revolute)
      offset += detail::closest_joint_offset(gt, prev, x);
    else
      offset = detail::closest_joint_offset(gt, x0, x);
    prev = gt.kind == JointKind::Revolute ? joint_displacement(gt, offset).apply(x0) : x0;
    const double q = std::clamp(q_start + offset, gt.lower, gt.upper);
    const Vec3d on_manifold = joint_displacement(gt, q - q_start).apply(x0);
    out.deviation = std::max(out.deviation, norm(on_manifold - x));
    q_min = std::min(q_min, q);
    q_max = std::max(q_max, q);
  }
  out.fraction = (q_max - q_min) / gt.range();
  if (!grasp_ok)
    out.reason = FailureReason::BadGrasp;
  else if (out.deviation > tol.eps_track)
    out.reason = FailureReason::OffManifold;
  else if (!(out.fraction > tol.success_fraction))
    out.reason = FailureReason::InsufficientRange;
  out.success = out.reason == FailureReason::None;
  return out;
}

// Plan built from the scene's own ground truth: the true part instance and
// joint, with the grasp chosen by the same rule as discovery.
inline InteractionPlan ground_truth_plan(const SceneSpec& scene, const DiscoveryConfig& cfg = {},
                                         std::size_t k_steps = kDefaultWaypoints) {
  const AotInstance part = part_at_state(scene, scene.state_initial);
  // The joint restricted to the rendered motion, with its zero state at the
  // initial state.
  KinematicParams joint = scene.joint;
  joint.lower = 0.0;
  joint.upper = (scene.state_final - scene.state_initial) * scene.joint.range();
  const PointCloud samples = sample_surface(part, 1000, 0);
  const Grasp g = select_grasp(part, joint, centroid(samples.points), cfg);
  return plan_motion(g, joint, 1.0, k_steps);
}

// ---------------------------------------------------------------------------
// Benchmark

struct BenchmarkConfig {
  DiscoveryConfig discovery;
  EvalTolerances tolerances;
  std::size_t waypoints = kDefaultWaypoints;
  double target_fraction = 1.0;
  bool ground_truth_bypass = false;  // plan from ground truth, skipping discovery
};

struct BenchmarkRow {
  std::string scene_id;
  std::string kind;
  std::string true_template;
  std::string identified_template;
  double score = std::numeric_limits<double>::quiet_NaN();
  double cosine_distance = std::numeric_limits<double>::quiet_NaN();
  double pivot_distance = std::numeric_limits<double>::quiet_NaN();
  EvalOutcome outcome;
  std::string error;
};

struct BenchmarkAggregate {
  std::size_t scenes = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;
  double identification_accuracy = 0.0;
  double mean_cosine_distance = 0.0;
  double mean_pivot_distance = 0.0;  // over revolute scenes
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;  // sorted by scene id
  BenchmarkAggregate aggregate;
};

inline BenchmarkAggregate aggregate_rows(const std::vector<BenchmarkRow>& rows, bool bypass) {
  BenchmarkAggregate a;
  a.scenes = rows.size();
  std::size_t id_ok = 0, n_cos = 0, n_piv = 0;
  for (const auto& r : rows) {
    if (r.outcome.success) ++a.successes;
    if (r.identified_template == r.true_template) ++id_ok;
    if (std::isfinite(r.cosine_distance)) {
      a.mean_cosine_distance += r.cosine_distance;
      ++n_cos;
    }
    if (std::isfinite(r.pivot_distance)) {
      a.mean_pivot_distance += r.pivot_distance;
      ++n_piv;
    }
  }
  if (a.scenes) {
    a.success_rate = static_cast<double>(a.successes) / static_cast<double>(a.scenes);
    a.identification_accuracy = bypass ? 1.0 : static_cast<double>(id_ok) / static_cast<double>(a.scenes);
  }
  if (n_cos) a.mean_cosine_distance /= static_cast<double>(n_cos);
  if (n_piv) a.mean_pivot_distance /= static_cast<double>(n_piv);
  return a;
}

inline BenchmarkRow run_scene(const CloudPair& pair, const ManifestEntry& e, const BenchmarkConfig& cfg) {
  BenchmarkRow row;
  row.scene_id = e.id;
  row.kind = to_string(e.kind);
  row.true_template = e.scene.part.template_id;
  try {
    InteractionPlan plan;
    if (cfg.ground_truth_bypass) {
      plan = ground_truth_plan(e.scene, cfg.discovery, cfg.waypoints);
      row.identified_template = row.true_template;
      row.cosine_distance = 0.0;
      if (e.scene.joint.kind == JointKind::Revolute) row.pivot_distance = 0.0;
    } else {
      const DiscoveryResult d = discover(pair, cfg.discovery, e.scene.joint);
      row.identified_template = d.instance.template_id;
      row.score = d.identification.best().score;
      row.cosine_distance = d.joint.errors->cosine_distance;
      if (e.scene.joint.kind == JointKind::Revolute) row.pivot_distance = d.joint.errors->pivot_distance;
      plan = plan_interaction(d, cfg.target_fraction, cfg.waypoints);
    }
    row.outcome = evaluate(plan, e.scene, cfg.tolerances);
  } catch (const Error& ex) {
    row.error = ex.what();
    row.outcome = {};
    row.outcome.reason = FailureReason::DiscoveryError;
  }
  return row;
}

// Runs every manifest scene; per-scene errors become failed rows. The
// report does not depend on `jobs`.
inline BenchmarkReport run_benchmark(const Manifest& m, const BenchmarkConfig& cfg, std::size_t jobs = 1) {
  BenchmarkReport rep;
  rep.rows.resize(m.entries.size());
  BenchmarkConfig inner = cfg;
  inner.discovery.identify.fit.jobs = 1;
  parallel_for(m.entries.size(), jobs, [&](std::size_t i) {
    const ManifestEntry& e = m.entries[i];
    CloudPair pair;
    if (!cfg.ground_truth_bypass) {
      try {
        pair = load_entry_pair(m, e);
      } catch (const Error& ex) {
        rep.rows[i].scene_id = e.id;
        rep.rows[i].kind = to_string(e.kind);
        rep.rows[i].true_template = e.scene.part.template_id;
        rep.rows[i].error = ex.what();
        rep.rows[i].outcome.reason = FailureReason::DiscoveryError;
        return;
      }
    }
    rep.rows[i] = run_scene(pair, e, inner);
  });
  std::stable_sort(rep.rows.begin(), rep.rows.end(),
                   [](const BenchmarkRow& a, const BenchmarkRow& b) { return a.scene_id < b.scene_id; });
  rep.aggregate = aggregate_rows(rep.rows, cfg.ground_truth_bypass);
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace detail

inline nlohmann::json grasp_to_json(const Grasp& g) {
  return {{"affordance", g.affordance}, {"selector", g.selector}, {"width", g.width}, {"pose", pose_to_json(g.pose)}};
}

inline nlohmann::json discovery_to_json(const DiscoveryResult& r) {
  nlohmann::json ranking = nlohmann::json::array();
  for (const auto& f : r.identification.ranking) {
    nlohmann::json row = {{"template", f.template_id}, {"score", detail::finite_or_null(f.score)}};
    if (f.fit) row["fit"] = fit_result_to_json(*f.fit);
    if (!f.error.empty()) row["error"] = f.error;
    ranking.push_back(row);
  }
  nlohmann::json joint = {{"params", joint_to_json(r.joint.joint)},
                          {"screw_kind", to_string(r.joint.screw.kind)},
                          {"rms", r.joint.rms},
                          {"approximate", r.joint.approximate}};
  if (r.joint.errors)
    joint["errors"] = {{"cosine_distance", r.joint.errors->cosine_distance},
                       {"pivot_distance", r.joint.errors->pivot_distance}};
  return {{"segmentation",
           {{"moving_points", r.mask.moving_count()},
            {"part_points", r.part_indices.size()},
            {"approximate", r.mask.approximate},
            {"mean_moving", r.mask.mean_moving},
            {"max_moving", r.mask.max_moving},
            {"mean_static", r.mask.mean_static},
            {"max_static", r.mask.max_static}}},
          {"identification", {{"ranking", ranking}, {"low_confidence", r.identification.low_confidence}}},
          {"instance", instance_to_json(r.instance)},
          {"joint", joint},
          {"grasp", grasp_to_json(r.grasp)}};
}

inline nlohmann::json plan_to_json(const InteractionPlan& p) {
  nlohmann::json w = nlohmann::json::array();
  for (const auto& x : p.waypoints) w.push_back(pose_to_json(x));
  return {{"grasp", grasp_to_json(p.grasp)},
          {"joint", joint_to_json(p.joint)},
          {"displacement", p.displacement},
          {"waypoints", w}};
}

inline nlohmann::json outcome_to_json(const EvalOutcome& o) {
  return {{"success", o.success},
          {"fraction", o.fraction},
          {"deviation", o.deviation},
          {"grasp_distance", o.grasp_distance},
          {"reason", to_string(o.reason)}};
}

inline nlohmann::json report_to_json(const BenchmarkReport& rep, const nlohmann::json& config) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rep.rows)
    rows.push_back({{"scene", r.scene_id},
                    {"kind", r.kind},
                    {"template", r.true_template},
                    {"identified", r.identified_template},
                    {"score", detail::finite_or_null(r.score)},
                    {"cosine_distance", detail::finite_or_null(r.cosine_distance)},
                    {"pivot_distance", detail::finite_or_null(r.pivot_distance)},
                    {"fraction", r.outcome.fraction},
                    {"deviation", r.outcome.deviation},
                    {"grasp_distance", r.outcome.grasp_distance},
                    {"outcome", r.outcome.success ? "success" : "failure"},
                    {"reason", to_string(r.outcome.reason)},
                    {"error", r.error}});
  const auto& a = rep.aggregate;
  return {{"format", "aot-report/1"},
          {"config", config},
          {"scenes", rows},
          {"aggregate",
           {{"scenes", a.scenes},
            {"successes", a.successes},
            {"success_rate", a.success_rate},
            {"identification_accuracy", a.identification_accuracy},
            {"mean_cosine_distance", a.mean_cosine_distance},
            {"mean_pivot_distance", a.mean_pivot_distance}}}};
}

}  // namespace aot
