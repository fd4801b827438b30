#include <random>
#include <set>

#include <gtest/gtest.h>

#include "aot/affordance.hpp"
#include "aot/canonical.hpp"
#include "aot/dual.hpp"
#include "aot/instance.hpp"
#include "aot/joint.hpp"
#include "test_util.hpp"

using namespace aot;

TEST(Registry, ContainsBuiltins) {
  const auto& reg = builtin_registry();
  std::set<std::string> ids;
  for (const auto& t : reg) EXPECT_TRUE(ids.insert(t.id).second) << "duplicate id " << t.id;
  for (const char* id : {"cuboid", "cylinder", "ring", "revolute", "prismatic", "handle", "lever"})
    EXPECT_TRUE(ids.count(id)) << id;

  const AotTemplate& cub = find_template("cuboid");
  ASSERT_EQ(cub.schema.size(), 3u);
  const char* names[] = {"a", "b", "c"};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(cub.schema[i].name, names[i]);
    EXPECT_EQ(cub.schema[i].lower, 0.01);
    EXPECT_EQ(cub.schema[i].upper, 10.0);
    EXPECT_EQ(cub.schema[i].unit, Unit::Length);
  }
  EXPECT_EQ(find_template("revolute").kind, TemplateKind::Kinematic);
  EXPECT_EQ(find_template("prismatic").kind, TemplateKind::Kinematic);

  const AotTemplate& handle = find_template("handle");
  ASSERT_EQ(handle.children.size(), 2u);
  EXPECT_EQ(handle.children[0].template_id, "ring");
  EXPECT_EQ(handle.children[1].template_id, "cylinder");
  EXPECT_THROW(find_template("widget"), LookupError);
}

TEST(Schema, RejectsBadEntries) {
  EXPECT_THROW(ParamSchema({{"a", 1.0, 1.0, Unit::Length}}), DomainError);
  EXPECT_THROW(ParamSchema({{"a", 0.0, 1.0, Unit::Length}, {"a", 0.0, 2.0, Unit::Length}}), DomainError);
}

TEST(EvalStructure, CuboidExamples) {
  const AotInstance unit = make_instance("cuboid", {1, 1, 1});
  EXPECT_EQ(eval_structure(unit, {0, 0, 0}), -1.0);
  EXPECT_EQ(eval_structure(unit, {1, 0, 0}), 0.0);
  const AotInstance moved = make_instance("cuboid", {1, 1, 1}, translation_pose({5, 0, 0}));
  EXPECT_EQ(eval_structure(moved, {5, 0, 0}), -1.0);
}

TEST(EvalStructure, OutOfBoundsParamsAreDomainErrors) {
  AotInstance bad{"cuboid", {1, -5, 1}, Pose::identity()};
  EXPECT_THROW(eval_structure(bad, {0, 0, 0}), DomainError);
  AotInstance torus{"ring", {0.5, 0.8}, Pose::identity()};
  EXPECT_THROW(eval_structure(torus, {0, 0, 0}), DomainError);
  EXPECT_THROW(eval_structure(make_instance("cuboid", {1, 1, 1}), {std::nan(""), 0, 0}), DomainError);
}

TEST(EvalStructure, SignConvention) {
  const AotInstance cyl = make_instance("cylinder", {1.0, 2.0});
  EXPECT_LT(eval_structure(cyl, {0.2, 0.1, 1.0}), 0.0);
  EXPECT_NEAR(eval_structure(cyl, {1.0, 0.0, 0.5}), 0.0, 1e-15);
  EXPECT_GT(eval_structure(cyl, {1.5, 0.0, 0.0}), 0.0);
  const AotInstance ring = make_instance("ring", {2.0, 0.3});
  EXPECT_NEAR(eval_structure(ring, {2.0, 0.0, 0.0}), -0.3, 1e-12);
  EXPECT_NEAR(eval_structure(ring, {0.0, 2.3, 0.0}), 0.0, 1e-12);
  EXPECT_GT(eval_structure(ring, {0.0, 0.0, 0.0}), 0.0);
}

TEST(EvalStructure, PoseEquivariance) {
  std::mt19937_64 rng(21);
  for (const char* id : {"cuboid", "cylinder", "ring", "handle", "lever"}) {
    const Shape s = find_template(id).shape;
    for (int i = 0; i < 200; ++i) {
      const auto params = test::random_params(s, rng);
      const Pose m = test::random_pose(rng, 3.0);
      const Vec3d x{test::uniform(rng, -1, 1), test::uniform(rng, -1, 1), test::uniform(rng, -1, 1)};
      const double local = eval_structure(make_instance(id, params), x);
      const double world = eval_structure(make_instance(id, params, m), transform_point(m, x));
      EXPECT_NEAR(world, local, 1e-12) << id;
    }
  }
}

TEST(EvalStructure, CompositeIsMinOfChildren) {
  std::mt19937_64 rng(22);
  for (const char* id : {"handle", "lever"}) {
    const AotTemplate& t = find_template(id);
    for (int i = 0; i < 200; ++i) {
      const auto params = test::random_params(t.shape, rng);
      const Vec3d x{test::uniform(rng, -1, 1), test::uniform(rng, -1, 1), test::uniform(rng, -0.5, 1.5)};
      // Oracle: build each child as a standalone instance at its frame.
      double expect = 1e300;
      for (std::size_t c = 0; c < t.children.size(); ++c) {
        const ChildLayout lay = child_layout(t.shape, c);
        const auto cp = child_params<double>(t.shape, params, c);
        const AotInstance child = make_instance(t.children[c].template_id,
                                                std::vector<double>(cp.begin(), cp.begin() + lay.count),
                                                child_frame<double>(t.shape, params, c));
        expect = std::min(expect, eval_structure(child, x));
      }
      EXPECT_NEAR(eval_structure(make_instance(id, params), x), expect, 1e-12);
    }
  }
}

TEST(EvalStructure, KinematicTemplatesHaveNoSurface) {
  const AotInstance rev = make_instance("revolute", {0.0, 1.0});
  EXPECT_THROW(eval_structure(rev, {0, 0, 0}), DomainError);
}

// Structure formulas against central differences, in params and pose.
template <std::size_t K>
double structure_grad_error(Shape s, const std::vector<double>& params, const Pose& base, const Vec3d& x) {
  std::array<double, K> z{};
  const std::size_t np = params.size();
  for (std::size_t i = 0; i < np; ++i) z[i] = params[i];
  for (std::size_t i = 0; i < 3; ++i) z[np + i] = base.translation[i];
  const auto f = [&](auto v) {
    using T = std::decay_t<decltype(v[0])>;
    std::array<T, 5> p{};
    for (std::size_t i = 0; i < np; ++i) p[i] = v[i];
    const Vec3<T> t{v[np], v[np + 1], v[np + 2]};
    const Vec3<T> w{v[np + 3], v[np + 4], v[np + 5]};
    const BasicPose<T> pose{exp_so3(w) * Mat3<T>::cast(base.rotation), t};
    return structure_local<T>(s, std::span<const T>(p.data(), np), pose.apply_inverse(Vec3<T>::cast(x)));
  };
  return grad_check<K>(f, z, 1e-5);
}

TEST(EvalStructure, GradientsMatchCentralDifferences) {
  std::mt19937_64 rng(23);
  for (const char* id : {"cuboid", "cylinder", "ring", "handle", "lever"}) {
    const Shape s = find_template(id).shape;
    int checked = 0;
    while (checked < 100) {
      const auto params = test::random_params(s, rng);
      const Pose pose = test::random_pose(rng, 1.0);
      const Vec3d local{test::uniform(rng, -1, 1), test::uniform(rng, -1, 1), test::uniform(rng, -1, 1.5)};
      if (test::branch_gap(s, params, local) < 1e-3) continue;
      const Vec3d x = transform_point(pose, local);
      double err = 0.0;
      switch (params.size()) {
        case 2: err = structure_grad_error<8>(s, params, pose, x); break;
        case 3: err = structure_grad_error<9>(s, params, pose, x); break;
        case 5: err = structure_grad_error<11>(s, params, pose, x); break;
      }
      EXPECT_LT(err, 1e-4) << id;
      ++checked;
    }
  }
}

TEST(Joint, MotionFormulaGradients) {
  std::mt19937_64 rng(24);
  for (JointKind kind : {JointKind::Revolute, JointKind::Prismatic}) {
    for (int i = 0; i < 100; ++i) {
      const std::array<double, 4> z{test::uniform(rng, -3, 3), test::uniform(rng, -1, 1), test::uniform(rng, -1, 1),
                                    test::uniform(rng, -1, 1)};
      for (int comp = 0; comp < 3; ++comp) {
        const auto f = [&](auto v) {
          using T = std::decay_t<decltype(v[0])>;
          return joint_move_local<T>(kind, v[0], Vec3<T>{v[1], v[2], v[3]})[comp];
        };
        EXPECT_LT(grad_check<4>(f, z, 1e-5), 1e-4);
      }
    }
  }
}

TEST(Affordance, IdentityGroundingEqualsLocal) {
  for (const char* id : {"cuboid", "cylinder", "ring", "handle", "lever"}) {
    const AotTemplate& t = find_template(id);
    std::mt19937_64 rng(31);
    const auto params = test::random_params(t.shape, rng);
    const AotInstance inst = make_instance(id, params);
    for (const auto& aff : grasp_affordances(t)) {
      const auto local = local_grasp<double>(t, params, aff, 0.3, 10.0);
      const auto world = ground_grasp(inst, aff, 0.3, 10.0);
      ASSERT_TRUE(local && world);
      EXPECT_EQ(max_abs_diff(local->pose, world->pose), 0.0);
    }
  }
}

TEST(Affordance, RotatedGrounding) {
  const AotInstance inst = make_instance("cuboid", {0.5, 0.3, 0.02}, rotation_pose(rot_z(kPi / 2)));
  const auto g = std::get<Grasp>(ground_affordance(inst, "grasp_edge", 0.1));
  const auto local = local_grasp<double>(inst.tmpl(), inst.params, "grasp_edge", 0.1);
  EXPECT_LE(max_abs_diff(g.pose, compose(rotation_pose(rot_z(kPi / 2)), local->pose)), 1e-15);
}

TEST(Affordance, RingGraspAtSelectorZero) {
  const AotInstance ring = make_instance("ring", {2.0, 0.03});
  const auto g = std::get<Grasp>(ground_affordance(ring, "grasp_tube", 0.0));
  // Declared generator: center = r_maj (cos 2 pi s, sin 2 pi s, 0).
  EXPECT_NEAR(g.pose.translation.x, 2.0, 1e-15);
  EXPECT_NEAR(g.pose.translation.y, 0.0, 1e-15);
  EXPECT_NEAR(g.pose.translation.z, 0.0, 1e-15);
  EXPECT_NEAR(norm(g.pose.translation), 2.0, 1e-15);
  EXPECT_NEAR(g.width, 0.06, 1e-15);
  EXPECT_TRUE(is_rotation(g.pose.rotation));
}

TEST(Affordance, UnknownIdIsLookupError) {
  const AotInstance c = make_instance("cuboid", {1, 1, 0.02});
  EXPECT_THROW(ground_affordance(c, "push_button", 0.0), LookupError);
  EXPECT_THROW(ground_affordance(c, "grasp_tube", 0.0), LookupError);
}

TEST(Affordance, InfeasibleGraspIsNotEmitted) {
  const AotInstance wide = make_instance("cylinder", {0.5, 1.0});
  EXPECT_FALSE(ground_grasp(wide, "grasp_body", 0.5).has_value());
  EXPECT_THROW(ground_affordance(wide, "grasp_body", 0.5), NoAffordanceError);
  EXPECT_TRUE(ground_grasp(make_instance("cylinder", {0.03, 1.0}), "grasp_body", 0.5).has_value());
}

TEST(Affordance, CuboidGraspClosesAcrossSmallestExtent) {
  std::mt19937_64 rng(32);
  const double w_max = kDefaultGripperOpening;
  for (int i = 0; i < 500; ++i) {
    std::vector<double> e{test::uniform(rng, 0.01, 0.5), test::uniform(rng, 0.01, 0.5), test::uniform(rng, 0.01, 0.5)};
    const double sel = test::uniform(rng, 0, 1);
    const auto g = local_grasp<double>(find_template("cuboid"), e, "grasp_edge", sel, w_max);
    const double smallest = *std::min_element(e.begin(), e.end());
    EXPECT_EQ(g.has_value(), 2 * smallest <= w_max);
    if (!g) continue;
    const std::size_t k = static_cast<std::size_t>(std::min_element(e.begin(), e.end()) - e.begin());
    const Vec3d closing = g->pose.rotation.column(0);
    EXPECT_NEAR(std::abs(closing[k]), 1.0, 1e-15);
    // Grasp center lies on the box surface.
    EXPECT_NEAR(eval_structure(make_instance("cuboid", e), g->pose.translation), 0.0, 1e-15);
  }
}

TEST(Affordance, GraspEquivariance) {
  std::mt19937_64 rng(33);
  for (const char* id : {"cuboid", "cylinder", "ring", "handle", "lever"}) {
    const AotTemplate& t = find_template(id);
    for (int i = 0; i < 50; ++i) {
      const auto params = test::random_params(t.shape, rng);
      const Pose m = test::random_pose(rng, 3.0);
      const double sel = test::uniform(rng, 0, 1);
      for (const auto& aff : grasp_affordances(t)) {
        const auto at_id = ground_grasp(make_instance(id, params), aff, sel, 10.0);
        const auto at_m = ground_grasp(make_instance(id, params, m), aff, sel, 10.0);
        EXPECT_LE(max_abs_diff(at_m->pose, compose(m, at_id->pose)), 1e-12);
      }
    }
  }
}

TEST(Affordance, ForceFieldEquivariance) {
  std::mt19937_64 rng(34);
  for (const char* id : {"revolute", "prismatic"}) {
    for (int i = 0; i < 100; ++i) {
      const AotInstance base = make_instance(id, {0.0, 1.0});
      const Pose m = test::random_pose(rng, 2.0);
      const AotInstance moved = make_instance(id, {0.0, 1.0}, m);
      const Vec3d x{test::uniform(rng, -1, 1), test::uniform(rng, -1, 1), test::uniform(rng, -1, 1)};
      const auto f0 = std::get<ForceField>(ground_affordance(base, "force_" + std::string(id), 0.0));
      const auto f1 = std::get<ForceField>(ground_affordance(moved, "force_" + std::string(id), 0.0));
      const Vec3d expect = m.rotation * f0(x);
      const Vec3d got = f1(transform_point(m, x));
      EXPECT_LE(norm(got - expect), 1e-12);
      EXPECT_NEAR(norm(got), 1.0, 1e-9);
    }
  }
}

TEST(KinematicForce, Examples) {
  KinematicParams pri{JointKind::Prismatic, {0, 0, 1}, {}, 0, 1};
  EXPECT_EQ(kinematic_force_direction(pri, {3, -2, 7}), (Vec3d{0, 0, 1}));
  KinematicParams rev{JointKind::Revolute, {0, 0, 1}, {0, 0, 0}, 0, 1};
  const Vec3d d = kinematic_force_direction(rev, {1, 0, 0});
  EXPECT_NEAR(norm(d - Vec3d{0, 1, 0}), 0.0, 1e-15);
  EXPECT_THROW(kinematic_force_direction(rev, {0, 0, 0}), GeometryError);
  EXPECT_THROW(kinematic_force_direction(rev, {0, 0, 3}), GeometryError);
}

// Point-set equality oracle: F agrees at random points.
double max_structure_gap(const AotInstance& a, const AotInstance& b, std::mt19937_64& rng, int n = 1000) {
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec3d x = a.pose.translation + Vec3d{test::uniform(rng, -1.5, 1.5), test::uniform(rng, -1.5, 1.5),
                                               test::uniform(rng, -1.5, 1.5)};
    worst = std::max(worst, std::abs(eval_structure(a, x) - eval_structure(b, x)));
  }
  return worst;
}

TEST(Canonicalize, CylinderSpinRemoved) {
  std::mt19937_64 rng(41);
  const Mat3d tilt = rotation_about({1, 2, 0.5}, 0.7);
  const AotInstance plain = make_instance("cylinder", {0.4, 0.8}, {tilt, {0.1, 0.2, 0.3}});
  const AotInstance spun = make_instance("cylinder", {0.4, 0.8}, {tilt * rot_z(37.0 * kPi / 180.0), {0.1, 0.2, 0.3}});
  const AotInstance c1 = canonicalize(plain), c2 = canonicalize(spun);
  EXPECT_LE(max_abs_diff(c1.pose, c2.pose), 1e-12);
  EXPECT_LE(max_structure_gap(spun, c2, rng), 1e-9);
}

TEST(Canonicalize, Idempotent) {
  std::mt19937_64 rng(42);
  for (const char* id : {"cuboid", "cylinder", "ring", "handle", "lever"}) {
    const Shape s = find_template(id).shape;
    for (int i = 0; i < 50; ++i) {
      const AotInstance inst = make_instance(id, test::random_params(s, rng), test::random_pose(rng));
      const AotInstance c = canonicalize(inst);
      const AotInstance cc = canonicalize(c);
      EXPECT_EQ(c.params, cc.params);
      EXPECT_LE(max_abs_diff(c.pose, cc.pose), 1e-12) << id;
    }
  }
  const AotInstance canonical_box = make_instance("cuboid", {3, 2, 1});
  EXPECT_EQ(canonicalize(canonical_box), canonical_box);
}

TEST(Canonicalize, CuboidSortsExtents) {
  std::mt19937_64 rng(43);
  const AotInstance box = make_instance("cuboid", {1, 3, 2}, test::random_pose(rng));
  const AotInstance c = canonicalize(box);
  EXPECT_EQ(c.params, (std::vector<double>{3, 2, 1}));
  EXPECT_TRUE(is_rotation(c.pose.rotation, 1e-12));
  EXPECT_LE(max_structure_gap(box, c, rng), 1e-9);
}

TEST(Canonicalize, PreservesZeroLevelSet) {
  std::mt19937_64 rng(44);
  for (const char* id : {"cuboid", "cylinder", "ring", "handle", "lever"}) {
    const Shape s = find_template(id).shape;
    for (int i = 0; i < 20; ++i) {
      const AotInstance inst = make_instance(id, test::random_params(s, rng), test::random_pose(rng));
      const AotInstance c = canonicalize(inst);
      EXPECT_LE(max_structure_gap(inst, c, rng, 200), 1e-9) << id;
      // Surface samples of the original stay on the canonical surface.
      for (int k = 0; k < 50; ++k) {
        const SurfaceCoord sc = surface_coord(s, inst.params, test::uniform(rng, 0, 1), test::uniform(rng, 0, 1),
                                              test::uniform(rng, 0, 1));
        const Vec3d x = inst.pose.apply(surface_point_local<double>(s, inst.params, sc));
        EXPECT_LT(std::abs(eval_structure(c, x)), 1e-9) << id;
      }
    }
  }
}

TEST(Serialization, RoundTripIsExact) {
  std::mt19937_64 rng(51);
  for (const char* id : {"cuboid", "cylinder", "ring", "handle", "lever"}) {
    const Shape s = find_template(id).shape;
    const AotInstance inst = make_instance(id, test::random_params(s, rng), test::random_pose(rng));
    const AotInstance back = parse_instance(serialize_instance(inst));
    EXPECT_EQ(back, inst);
  }
}

TEST(Serialization, Errors) {
  const std::string bad_bounds = R"({"template": "cuboid", "params": {"a": -5, "b": 1, "c": 1},
    "pose": [1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]})";
  try {
    parse_instance(bad_bounds);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("params.a"), std::string::npos) << e.what();
  }
  const std::string unknown = R"({"template": "widget", "params": {}, "pose": []})";
  try {
    parse_instance(unknown);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("widget"), std::string::npos);
  }
  try {
    parse_instance("{\n  \"template\": \"cuboid\",\n  \"params\": {\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line"), std::string::npos);
  }
  EXPECT_THROW(parse_instance(R"({"template": "cuboid", "params": {"a": 1, "b": 1, "c": 1}, "pose": [1,2]})"),
               ParseError);
}
