#pragma once

// Affordance generators and their grounding in world coordinates.
//
// Gripper frame convention for grasp poses: column 0 is the finger closing
// axis, column 2 the approach direction (pointing into the object), and the
// origin is the grasp center between the fingers.

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "aot/errors.hpp"
#include "aot/geometry.hpp"
#include "aot/instance.hpp"
#include "aot/joint.hpp"
#include "aot/structure.hpp"

namespace aot {

inline constexpr double kDefaultGripperOpening = 0.08;

template <class T>
struct BasicGrasp {
  BasicPose<T> pose;
  T width{};  // opening the fingers must span
  std::string affordance;
  double selector = 0.0;
};

using Grasp = BasicGrasp<double>;

// World-space direction field of a kinematic affordance.
struct ForceField {
  KinematicParams joint;
  Vec3d operator()(const Vec3d& x) const { return kinematic_force_direction(joint, x); }
};

using GroundedAffordance = std::variant<Grasp, ForceField>;

namespace detail {

template <class T>
BasicPose<T> gripper_frame(const Vec3<T>& center, const Vec3d& closing, const Vec3d& approach) {
  const Vec3d y = cross(approach, closing);
  return {Mat3<T>::cast(Mat3d::from_columns(closing, y, approach)), center};
}

inline std::size_t smallest_axis(std::span<const double> e) {
  std::size_t k = 0;
  for (std::size_t i = 1; i < 3; ++i)
    if (e[i] < e[k]) k = i;
  return k;
}

template <class T>
BasicGrasp<T> cuboid_grasp(std::span<const T> p, double selector) {
  const std::array<double, 3> ev{value_of(p[0]), value_of(p[1]), value_of(p[2])};
  const std::size_t k = smallest_axis(ev);
  const std::size_t i = (k == 0) ? 1 : 0;
  const std::size_t j = (k == 2) ? 1 : 2;
  const int quadrant = std::min(3, static_cast<int>(std::floor(std::clamp(selector, 0.0, 1.0) * 4.0)));
  const std::size_t axis = (quadrant % 2 == 0) ? i : j;
  const double sign = quadrant < 2 ? 1.0 : -1.0;
  Vec3<T> center{T(0), T(0), T(0)};
  center[axis] = p[axis] * sign;
  Vec3d normal{0, 0, 0};
  normal[axis] = sign;
  Vec3d closing{0, 0, 0};
  closing[k] = 1.0;
  return {gripper_frame(center, closing, -normal), T(2) * p[k], "grasp_edge", selector};
}

template <class T>
BasicGrasp<T> cylinder_grasp(std::span<const T> p, double selector) {
  const Vec3<T> center{T(0), T(0), p[1] * (2.0 * std::clamp(selector, 0.0, 1.0) - 1.0)};
  return {gripper_frame(center, {0, 1, 0}, {-1, 0, 0}), T(2) * p[0], "grasp_body", selector};
}

template <class T>
BasicGrasp<T> ring_grasp(std::span<const T> p, double selector) {
  const double th = 2 * kPi * std::clamp(selector, 0.0, 1.0);
  const Vec3d dir{std::cos(th), std::sin(th), 0.0};
  const Vec3<T> center{p[0] * dir.x, p[0] * dir.y, T(0)};
  return {gripper_frame(center, {0, 0, 1}, -dir), T(2) * p[1], "grasp_tube", selector};
}

template <class T>
BasicGrasp<T> primitive_grasp(Shape s, std::span<const T> p, double selector) {
  switch (s) {
    case Shape::Cuboid: return cuboid_grasp(p, selector);
    case Shape::Cylinder: return cylinder_grasp(p, selector);
    case Shape::Ring: return ring_grasp(p, selector);
    default: throw DomainError("shape has no grasp affordance");
  }
}

}  // namespace detail

// Local-frame grasp M_g* of a geometric template. Returns nullopt when the
// required opening exceeds `max_opening`.
template <class T>
std::optional<BasicGrasp<T>> local_grasp(const AotTemplate& t, std::span<const T> p, std::string_view affordance,
                                         double selector, double max_opening = kDefaultGripperOpening) {
  const AffordanceGen& gen = t.affordance(affordance);
  if (gen.kind != AffordanceKind::Grasp) throw LookupError("affordance '" + gen.id + "' is not a grasp");
  BasicGrasp<T> g;
  if (!t.is_composite()) {
    g = detail::primitive_grasp(t.shape, p, selector);
  } else {
    std::size_t child = 0;
    while (child < t.children.size() && affordance.rfind(t.children[child].name + ".", 0) != 0) ++child;
    if (child == t.children.size()) throw LookupError("affordance '" + gen.id + "' maps to no child");
    const ChildLayout lay = child_layout(t.shape, child);
    const auto cp = child_params(t.shape, p, child);
    g = detail::primitive_grasp<T>(lay.shape, std::span<const T>(cp.data(), lay.count), selector);
    g.pose = child_frame(t.shape, p, child) * g.pose;
  }
  g.affordance = gen.id;
  if (value_of(g.width) > max_opening) return std::nullopt;
  return g;
}

inline std::vector<std::string> grasp_affordances(const AotTemplate& t) {
  std::vector<std::string> ids;
  for (const auto& a : t.affordances)
    if (a.kind == AffordanceKind::Grasp) ids.push_back(a.id);
  return ids;
}

// World grasp M_g = pose * M_g*.
inline std::optional<Grasp> ground_grasp(const AotInstance& inst, std::string_view affordance, double selector,
                                         double max_opening = kDefaultGripperOpening) {
  auto g = local_grasp<double>(inst.tmpl(), inst.params, affordance, selector, max_opening);
  if (g) g->pose = inst.pose * g->pose;
  return g;
}

// Grounds any affordance of an instance. Grasp affordances whose opening
// exceeds `max_opening` raise NoAffordanceError.
inline GroundedAffordance ground_affordance(const AotInstance& inst, std::string_view affordance, double selector,
                                            double max_opening = kDefaultGripperOpening) {
  validate_instance(inst);
  const AotTemplate& t = inst.tmpl();
  const AffordanceGen& gen = t.affordance(affordance);
  if (gen.kind == AffordanceKind::Force) return ForceField{joint_from_instance(inst)};
  auto g = ground_grasp(inst, affordance, selector, max_opening);
  if (!g) throw NoAffordanceError("grasp '" + gen.id + "' needs a wider gripper opening than available");
  return *g;
}

}  // namespace aot
