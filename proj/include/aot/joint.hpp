#pragma once

#include <cmath>
#include <string>

#include "aot/errors.hpp"
#include "aot/geometry.hpp"
#include "aot/instance.hpp"

namespace aot {

enum class JointKind { Revolute, Prismatic };

inline std::string to_string(JointKind k) { return k == JointKind::Revolute ? "revolute" : "prismatic"; }

inline JointKind joint_kind_from_string(const std::string& s) {
  if (s == "revolute") return JointKind::Revolute;
  if (s == "prismatic") return JointKind::Prismatic;
  throw ParseError("unknown joint kind '" + s + "'");
}

// One-DOF joint: unit axis, pivot (revolute only) and motion range in
// radians or length units.
struct KinematicParams {
  JointKind kind = JointKind::Revolute;
  Vec3d axis{0, 0, 1};
  Vec3d pivot{};
  double lower = 0.0;
  double upper = 1.0;

  double range() const { return upper - lower; }
};

inline void validate_joint(const KinematicParams& k) {
  if (std::abs(norm(k.axis) - 1.0) > 1e-9) throw DomainError("joint axis must be a unit vector");
  if (!(k.lower < k.upper)) throw DomainError("joint range needs lower < upper");
}

// Rigid displacement produced by moving the joint by `q` from its zero state.
inline Pose joint_displacement(const KinematicParams& k, double q) {
  if (k.kind == JointKind::Prismatic) return translation_pose(k.axis * q);
  const Mat3d r = rotation_about(k.axis, q);
  return {r, k.pivot - r * k.pivot};
}

// Rotation by `angle` about the line through `pivot` with direction `axis`.
inline Pose rotation_about_line(const Vec3d& axis, const Vec3d& pivot, double angle) {
  const Mat3d r = rotation_about(axis, angle);
  return {r, pivot - r * pivot};
}

// Unit direction in which a point attached to the moving part travels when
// the joint value increases.
inline Vec3d kinematic_force_direction(const KinematicParams& k, const Vec3d& x) {
  if (k.kind == JointKind::Prismatic) return k.axis;
  const Vec3d c = cross(k.axis, x - k.pivot);
  const double n = norm(c);
  if (n <= 1e-9) throw GeometryError("point lies on the revolute axis; force direction undefined");
  return c / n;
}

// Distance from a point to the line through `p` with unit direction `u`.
inline double point_line_distance(const Vec3d& x, const Vec3d& p, const Vec3d& u) {
  const Vec3d d = x - p;
  return norm(d - u * dot(d, u));
}

// Kinematic template instances encode the joint frame in their pose: the
// axis is the pose z column and the pivot is the pose translation.
inline AotInstance joint_to_instance(const KinematicParams& k) {
  validate_joint(k);
  const Mat3d r = rotation_between({0, 0, 1}, k.axis);
  return make_instance(to_string(k.kind), {k.lower, k.upper}, {r, k.pivot});
}

inline KinematicParams joint_from_instance(const AotInstance& inst) {
  validate_instance(inst);
  KinematicParams k;
  if (inst.template_id == "revolute")
    k.kind = JointKind::Revolute;
  else if (inst.template_id == "prismatic")
    k.kind = JointKind::Prismatic;
  else
    throw DomainError("instance of '" + inst.template_id + "' is not a joint");
  k.axis = inst.pose.rotation.column(2);
  k.pivot = inst.pose.translation;
  k.lower = inst.params[0];
  k.upper = inst.params[1];
  return k;
}

inline nlohmann::json joint_to_json(const KinematicParams& k) {
  return {{"kind", to_string(k.kind)},
          {"axis", {k.axis.x, k.axis.y, k.axis.z}},
          {"pivot", {k.pivot.x, k.pivot.y, k.pivot.z}},
          {"lower", k.lower},
          {"upper", k.upper}};
}

inline Vec3d vec3_from_json(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) throw ParseError("field '" + field + "' must hold 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json vec3_to_json(const Vec3d& v) { return {v.x, v.y, v.z}; }

inline KinematicParams joint_from_json(const nlohmann::json& j) {
  KinematicParams k;
  k.kind = joint_kind_from_string(j.at("kind").get<std::string>());
  k.axis = vec3_from_json(j.at("axis"), "joint.axis");
  k.pivot = vec3_from_json(j.at("pivot"), "joint.pivot");
  k.lower = j.at("lower").get<double>();
  k.upper = j.at("upper").get<double>();
  validate_joint(k);
  return k;
}

// Joint motion in the joint's own frame (axis = local z through the origin),
// generic over the scalar so it can be differentiated in q and x.
template <class T>
Vec3<T> joint_move_local(JointKind kind, const T& q, const Vec3<T>& x) {
  if (kind == JointKind::Prismatic) return {x.x, x.y, x.z + q};
  return exp_so3(Vec3<T>{T(0), T(0), q}) * x;
}

}  // namespace aot
