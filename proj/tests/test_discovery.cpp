#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "aot/discovery.hpp"
#include "test_util.hpp"

using namespace aot;

namespace {

DatasetConfig clean_config(std::vector<std::string> kinds, std::size_t count = 1, std::uint64_t seed = 0) {
  DatasetConfig c;
  c.count = count;
  c.seed = seed;
  c.kinds = std::move(kinds);
  c.noise = NoiseConfig::none();
  return c;
}

Grasp grasp_at(const Vec3d& t) {
  Grasp g;
  g.pose = translation_pose(t);
  g.width = 0.02;
  g.affordance = "grasp_edge";
  return g;
}

// Revolute scene about the z axis through the origin whose moving part is a
// thin plate containing the point (1, 0, 0).
SceneSpec hinge_scene(double range) {
  SceneSpec s;
  s.part = make_instance("cuboid", {0.5, 0.1, 0.02}, translation_pose({0.5, 0, 0}));
  s.joint = {JointKind::Revolute, {0, 0, 1}, {0, 0, 0}, 0.0, range};
  s.noise = NoiseConfig::none();
  return s;
}

double frobenius_distance(const Mat3d& a, const Mat3d& b) {
  double s = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) s += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
  return std::sqrt(s);
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(d);
  return d;
}

}  // namespace

TEST(Discover, NoiselessLeverIsIdentifiedWithExactAxis) {
  const GeneratedScene g = make_scene(clean_config({"lever"}), 0);
  const CloudPair pair = render_observation(g.spec, 2000, g.seed);
  const DiscoveryResult r = discover(pair, {}, g.spec.joint);
  EXPECT_EQ(r.instance.template_id, "lever");
  ASSERT_TRUE(r.joint.errors.has_value());
  EXPECT_LT(r.joint.errors->cosine_distance, 1e-6);
  EXPECT_EQ(r.joint.joint.kind, JointKind::Revolute);
  EXPECT_EQ(r.force.joint.kind, JointKind::Revolute);
}

TEST(Discover, NoiselessDrawerIsPrismaticCuboid) {
  const GeneratedScene g = make_scene(clean_config({"drawer"}), 0);
  const CloudPair pair = render_observation(g.spec, 2000, g.seed);
  const DiscoveryResult r = discover(pair, {}, g.spec.joint);
  EXPECT_EQ(r.instance.template_id, "cuboid");
  EXPECT_EQ(r.joint.joint.kind, JointKind::Prismatic);
  EXPECT_LT(1.0 - std::abs(dot(r.joint.joint.axis, g.spec.joint.axis)), 1e-6);
  // The grasp sits on the fitted part surface and fits the gripper.
  EXPECT_LT(surface_distance(part_at_state(g.spec, 0.0), r.grasp.pose.translation), 0.05);
  EXPECT_LE(r.grasp.width, kDefaultGripperOpening);
}

TEST(Discover, ZeroDisplacementIsNoMotion) {
  GeneratedScene g = make_scene(clean_config({"door"}), 0);
  g.spec.state_final = g.spec.state_initial;
  const CloudPair pair = render_observation(g.spec, 1000, g.seed);
  EXPECT_THROW(discover(pair), NoMotionError);
}

TEST(Discover, GraspIsTheCandidateNearestTheCentroid) {
  // Oracle: exhaustive scan of every grounded grasp.
  const AotInstance inst = make_instance("cuboid", {0.3, 0.05, 0.02});
  const KinematicParams joint{JointKind::Prismatic, {0, 0, 1}, {}, 0.0, 0.3};
  const Vec3d c{0.2, 0.1, 0.0};
  const DiscoveryConfig cfg;
  const Grasp g = select_grasp(inst, joint, c, cfg);
  for (std::size_t k = 0; k < cfg.grasp_selectors; ++k)
    for (const auto& aff : grasp_affordances(inst.tmpl()))
      if (auto h = ground_grasp(inst, aff, static_cast<double>(k) / cfg.grasp_selectors, cfg.max_opening))
        EXPECT_LE(norm(g.pose.translation - c), norm(h->pose.translation - c));
}

TEST(Discover, NoFeasibleGraspRaises) {
  const AotInstance wide = make_instance("cuboid", {0.5, 0.5, 0.5});
  const KinematicParams joint{JointKind::Prismatic, {0, 0, 1}, {}, 0.0, 0.3};
  EXPECT_THROW(select_grasp(wide, joint, {0, 0, 0}, {}), NoAffordanceError);
}

TEST(Plan, PrismaticWaypointsFollowTheFormula) {
  const KinematicParams joint{JointKind::Prismatic, {0, 0, 1}, {}, 0.0, 0.5};
  const Grasp g = grasp_at({0.1, 0.2, 0.3});
  const InteractionPlan p = plan_motion(g, joint, 1.0, 32);
  ASSERT_EQ(p.waypoints.size(), 33u);
  EXPECT_DOUBLE_EQ(p.displacement, 0.5);
  for (std::size_t k = 0; k <= 32; ++k) {
    const Vec3d expect = g.pose.translation + Vec3d{0, 0, 0.5 * static_cast<double>(k) / 32.0};
    EXPECT_LT(norm(p.waypoints[k].translation - expect), 1e-12) << k;
    EXPECT_LT(frobenius_distance(p.waypoints[k].rotation, g.pose.rotation), 1e-12);
  }
}

TEST(Plan, RevoluteFinalWaypointIsTheRotatedGrasp) {
  const Vec3d u = normalized(Vec3d{1, 2, 2}), piv{0.3, -0.1, 0.2};
  const KinematicParams joint{JointKind::Revolute, u, piv, 0.0, kPi / 2};
  Grasp g = grasp_at({1, 0, 0});
  g.pose.rotation = rot_x(0.3);
  const InteractionPlan p = plan_motion(g, joint, 1.0, 32);
  // Rot(u, p; 90 deg) applied as x -> R (x - p) + p with R from Rodrigues.
  const Mat3d R = rotation_about(u, kPi / 2);
  const Vec3d expect_t = R * (g.pose.translation - piv) + piv;
  EXPECT_LT(norm(p.waypoints.back().translation - expect_t), 1e-12);
  EXPECT_LT(frobenius_distance(p.waypoints.back().rotation, R * g.pose.rotation), 1e-12);
}

TEST(Plan, ConsecutiveGapsAreEqual) {
  const KinematicParams joint{JointKind::Revolute, {0, 0, 1}, {0, 0, 0}, 0.0, 1.3};
  const InteractionPlan p = plan_motion(grasp_at({0.7, 0, 0.1}), joint, 0.8, 17);
  const double step = p.displacement / 17.0;
  for (std::size_t k = 1; k < p.waypoints.size(); ++k) {
    const Vec3d a = p.waypoints[k - 1].translation, b = p.waypoints[k].translation;
    EXPECT_NEAR(std::atan2(a.x * b.y - a.y * b.x, a.x * b.x + a.y * b.y), step, 1e-12);
    EXPECT_NEAR(b.z, 0.1, 1e-12);
  }
}

TEST(Plan, InvalidRequestsRaise) {
  const KinematicParams rev{JointKind::Revolute, {0, 0, 1}, {0, 0, 0}, 0.0, 1.0};
  EXPECT_THROW(plan_motion(grasp_at({0, 0, 0.4}), rev, 1.0), PlanningError);
  EXPECT_THROW(plan_motion(grasp_at({1, 0, 0}), rev, 0.0), DomainError);
  EXPECT_THROW(plan_motion(grasp_at({1, 0, 0}), rev, 1.5), DomainError);
}

TEST(Evaluate, GroundTruthPlanSucceedsExactly) {
  const SceneSpec s = hinge_scene(kPi / 2);
  const InteractionPlan p = plan_motion(grasp_at({1, 0, 0}), s.joint, 1.0);
  const EvalOutcome o = evaluate(p, s);
  EXPECT_TRUE(o.success);
  EXPECT_EQ(o.reason, FailureReason::None);
  EXPECT_NEAR(o.fraction, 1.0, 1e-9);
  EXPECT_LT(o.deviation, 1e-12);
}

TEST(Evaluate, PerpendicularAxisIsOffManifoldWithAnalyticDeviation) {
  // Plan about y instead of z: waypoint k sits at (cos q, 0, -sin q). Its
  // nearest point on the true arc (cos t, sin t, 0), t in [0, pi/2], is
  // t = 0, at distance 2 sin(q / 2). The maximum is at the last waypoint.
  const SceneSpec s = hinge_scene(kPi / 2);
  KinematicParams wrong = s.joint;
  wrong.axis = {0, 1, 0};
  const InteractionPlan p = plan_motion(grasp_at({1, 0, 0}), wrong, 1.0, 32);
  const EvalOutcome o = evaluate(p, s);
  EXPECT_FALSE(o.success);
  EXPECT_EQ(o.reason, FailureReason::OffManifold);
  EXPECT_NEAR(o.deviation, 2.0 * std::sin(kPi / 4), 1e-9);

  // Deviation grows with k: truncated plans deviate less.
  double prev = 0.0;
  for (std::size_t k = 1; k <= 32; ++k) {
    InteractionPlan part = p;
    part.waypoints.resize(k + 1);
    const double d = evaluate(part, s).deviation;
    EXPECT_NEAR(d, 2.0 * std::sin(kPi / 2 * k / 32.0 / 2.0), 1e-9);
    EXPECT_GT(d, prev);
    prev = d;
  }
}

TEST(Evaluate, HalfRangeIsInsufficient) {
  const SceneSpec s = hinge_scene(1.2);
  const EvalOutcome o = evaluate(plan_motion(grasp_at({1, 0, 0}), s.joint, 0.5), s);
  EXPECT_FALSE(o.success);
  EXPECT_EQ(o.reason, FailureReason::InsufficientRange);
  EXPECT_NEAR(o.fraction, 0.5, 1e-9);

  // Threshold semantics: exactly 80% is not enough, just above is.
  EXPECT_EQ(evaluate(plan_motion(grasp_at({1, 0, 0}), s.joint, 0.8), s).reason, FailureReason::InsufficientRange);
  EXPECT_TRUE(evaluate(plan_motion(grasp_at({1, 0, 0}), s.joint, 0.81), s).success);
}

TEST(Evaluate, GraspOffThePartIsBad) {
  const SceneSpec s = hinge_scene(1.0);
  EXPECT_EQ(evaluate(plan_motion(grasp_at({1, 0, 0.3}), s.joint, 1.0), s).reason, FailureReason::BadGrasp);
  Grasp wide = grasp_at({1, 0, 0});
  wide.width = 0.2;
  EXPECT_EQ(evaluate(plan_motion(wide, s.joint, 1.0), s).reason, FailureReason::BadGrasp);
}

TEST(Evaluate, IsAPureFunction) {
  const SceneSpec s = make_scene(clean_config({"door"}), 3).spec;
  KinematicParams j = s.joint;
  j.axis = normalized(j.axis + Vec3d{0.02, -0.01, 0.03});
  const Grasp g = ground_truth_plan(s).grasp;
  const InteractionPlan p = plan_motion(g, j, 1.0);
  const nlohmann::json a = outcome_to_json(evaluate(p, s)), b = outcome_to_json(evaluate(p, s));
  EXPECT_EQ(a.dump(), b.dump());
}

TEST(Evaluate, GroundTruthProjectionRecoversUniformStates) {
  std::mt19937_64 rng(11);
  DatasetConfig cfg = clean_config(scene_kind_names(), 60, 5);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    const SceneSpec s = make_scene(cfg, i).spec;
    const InteractionPlan p = ground_truth_plan(s);
    const std::size_t K = p.waypoints.size() - 1;
    const Vec3d x0 = p.grasp.pose.translation;
    for (std::size_t k = 0; k <= K; ++k) {
      const double off = detail::closest_joint_offset(s.joint, x0, p.waypoints[k].translation);
      EXPECT_NEAR(off, static_cast<double>(k) / K * s.joint.range(), 1e-9) << i << " " << k;
    }
    const EvalOutcome o = evaluate(p, s);
    EXPECT_TRUE(o.success) << i;
    EXPECT_NEAR(o.fraction, 1.0, 1e-9) << i;
  }
}

TEST(Benchmark, GroundTruthBypassSucceedsEverywhere) {
  const auto dir = temp_dir("aot_test_bench_gt");
  const Manifest m = generate_dataset(clean_config(scene_kind_names(), 12, 2), dir, {});
  BenchmarkConfig cfg;
  cfg.ground_truth_bypass = true;
  const BenchmarkReport rep = run_benchmark(m, cfg, 2);
  EXPECT_EQ(rep.aggregate.scenes, 12u);
  EXPECT_EQ(rep.aggregate.successes, 12u);
  EXPECT_DOUBLE_EQ(rep.aggregate.success_rate, 1.0);
  for (const auto& r : rep.rows) EXPECT_NEAR(r.outcome.fraction, 1.0, 1e-9);
  std::filesystem::remove_all(dir);
}

TEST(Benchmark, ReportIsDeterministicAndConsistent) {
  const auto dir = temp_dir("aot_test_bench_det");
  DatasetConfig dc = clean_config(scene_kind_names(), 4, 9);
  dc.noise.sigma_rel = 0.005;
  dc.points = 1200;
  const Manifest m = generate_dataset(dc, dir, {{"seed", 9}});
  const BenchmarkConfig cfg;
  const BenchmarkReport a = run_benchmark(m, cfg, 1), b = run_benchmark(m, cfg, 3);
  EXPECT_EQ(report_to_json(a, m.config).dump(), report_to_json(b, m.config).dump());

  // Aggregates equal a recomputation from the rows.
  std::size_t succ = 0, id_ok = 0;
  for (const auto& r : a.rows) succ += r.outcome.success, id_ok += r.identified_template == r.true_template;
  EXPECT_EQ(a.aggregate.successes, succ);
  EXPECT_DOUBLE_EQ(a.aggregate.success_rate, succ / 4.0);
  EXPECT_DOUBLE_EQ(a.aggregate.identification_accuracy, id_ok / 4.0);
  for (std::size_t i = 1; i < a.rows.size(); ++i) EXPECT_LT(a.rows[i - 1].scene_id, a.rows[i].scene_id);

  const nlohmann::json j = report_to_json(a, m.config);
  EXPECT_EQ(j["format"], "aot-report/1");
  EXPECT_EQ(j["config"]["seed"], 9);
  ASSERT_EQ(j["scenes"].size(), 4u);
  for (const char* key : {"scene", "template", "identified", "score", "cosine_distance", "pivot_distance", "fraction",
                          "deviation", "outcome", "reason"})
    EXPECT_TRUE(j["scenes"][0].contains(key)) << key;
  EXPECT_EQ(j["aggregate"]["successes"], succ);
  std::filesystem::remove_all(dir);
}

TEST(Benchmark, MissingCloudBecomesAFailedRow) {
  const auto dir = temp_dir("aot_test_bench_missing");
  const Manifest m = generate_dataset(clean_config({"drawer"}, 2, 1), dir, {});
  std::filesystem::remove(dir / m.entries[0].final_file);
  const BenchmarkReport rep = run_benchmark(m, {});
  EXPECT_FALSE(rep.rows[0].outcome.success);
  EXPECT_EQ(rep.rows[0].outcome.reason, FailureReason::DiscoveryError);
  EXPECT_FALSE(rep.rows[0].error.empty());
  EXPECT_TRUE(rep.rows[1].outcome.success);
  EXPECT_EQ(rep.aggregate.successes, 1u);
  std::filesystem::remove_all(dir);
}

TEST(Benchmark, LessNoiseNeverHurtsAtSmallScale) {
  const auto d0 = temp_dir("aot_test_bench_s0"), d1 = temp_dir("aot_test_bench_s1");
  DatasetConfig c0 = clean_config(scene_kind_names(), 6, 21);
  c0.points = 1200;
  DatasetConfig c1 = c0;
  c1.noise.sigma_rel = 0.01;
  const auto r0 = run_benchmark(generate_dataset(c0, d0, {}), {});
  const auto r1 = run_benchmark(generate_dataset(c1, d1, {}), {});
  EXPECT_GE(r0.aggregate.success_rate, r1.aggregate.success_rate);
  EXPECT_GE(r0.aggregate.success_rate, 5.0 / 6.0);
  std::filesystem::remove_all(d0);
  std::filesystem::remove_all(d1);
}

TEST(Serialization, DiscoveryAndPlanJson) {
  const GeneratedScene g = make_scene(clean_config({"drawer"}), 0);
  const DiscoveryResult r = discover(render_observation(g.spec, 1000, g.seed), {}, g.spec.joint);
  const nlohmann::json j = discovery_to_json(r);
  EXPECT_EQ(j["instance"]["template"], r.instance.template_id);
  EXPECT_EQ(j["joint"]["screw_kind"], "prismatic");
  EXPECT_EQ(j["identification"]["ranking"].size(), geometric_template_ids().size());
  const nlohmann::json pj = plan_to_json(plan_interaction(r, 1.0));
  EXPECT_EQ(pj["waypoints"].size(), kDefaultWaypoints + 1);
  EXPECT_EQ(outcome_to_json(EvalOutcome{})["reason"], "none");
}
