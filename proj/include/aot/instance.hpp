#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "aot/errors.hpp"
#include "aot/geometry.hpp"
#include "aot/structure.hpp"
#include "aot/templates.hpp"

namespace aot {

// A template reference with concrete parameters and a world pose.
struct AotInstance {
  std::string template_id;
  std::vector<double> params;
  Pose pose;

  const AotTemplate& tmpl() const { return find_template(template_id); }
  Shape shape() const { return tmpl().shape; }
  std::span<const double> param_span() const { return params; }

  double param(std::string_view name) const { return params.at(tmpl().schema.index_of(name)); }

  bool operator==(const AotInstance& o) const {
    return template_id == o.template_id && params == o.params && pose.rotation == o.pose.rotation &&
           pose.translation == o.pose.translation;
  }
};

inline void validate_instance(const AotInstance& inst) {
  const AotTemplate& t = inst.tmpl();
  if (inst.params.size() != t.schema.size())
    throw DomainError("template '" + t.id + "' expects " + std::to_string(t.schema.size()) + " params, got " +
                      std::to_string(inst.params.size()));
  for (std::size_t i = 0; i < inst.params.size(); ++i) {
    const auto& e = t.schema[i];
    if (!(inst.params[i] >= e.lower && inst.params[i] <= e.upper)) {
      std::ostringstream os;
      os << "param '" << e.name << "' = " << inst.params[i] << " outside [" << e.lower << ", " << e.upper << "]";
      throw DomainError(os.str());
    }
  }
  if (!satisfies_coupling(t.shape, inst.params))
    throw DomainError("params of '" + t.id + "' violate the template's coupling constraint");
  if (!is_valid_pose(inst.pose)) throw DomainError("instance pose is not a rigid transform");
}

inline AotInstance make_instance(std::string id, std::vector<double> params, Pose pose = Pose::identity()) {
  AotInstance inst{std::move(id), std::move(params), pose};
  validate_instance(inst);
  return inst;
}

// F(params, pose^-1 x): negative inside, zero on the surface, positive outside.
inline double eval_structure(const AotInstance& inst, const Vec3d& x) {
  if (!std::isfinite(x.x) || !std::isfinite(x.y) || !std::isfinite(x.z))
    throw DomainError("eval_structure needs a finite point");
  validate_instance(inst);
  return structure_local<double>(inst.shape(), inst.params, inst.pose.apply_inverse(x));
}

// Same as eval_structure without the bounds check; used in hot loops on
// instances that are already known valid.
inline double eval_structure_unchecked(const AotInstance& inst, Shape shape, const Vec3d& x) {
  return structure_local<double>(shape, inst.params, inst.pose.apply_inverse(x));
}

// Unsigned distance from a world point to the instance surface.
inline double surface_distance(const AotInstance& inst, const Vec3d& x) {
  return std::sqrt(sq_distance_local<double>(inst.shape(), inst.params, inst.pose.apply_inverse(x)));
}

// ---------------------------------------------------------------------------
// Text serialization:
//   {"template": "cuboid", "params": {"a": ..., "b": ..., "c": ...},
//    "pose": [16 row-major affine entries]}

inline nlohmann::json pose_to_json(const Pose& p) {
  const Mat4 a = as_affine(p);
  return nlohmann::json(std::vector<double>(a.m.begin(), a.m.end()));
}

inline Pose pose_from_json(const nlohmann::json& j, const std::string& field = "pose") {
  if (!j.is_array() || j.size() != 16) throw ParseError("field '" + field + "' must hold 16 numbers");
  Mat4 a;
  for (std::size_t i = 0; i < 16; ++i) {
    if (!j[i].is_number()) throw ParseError("field '" + field + "[" + std::to_string(i) + "]' is not a number");
    a.m[i] = j[i].get<double>();
  }
  try {
    return pose_from_affine(a);
  } catch (const DomainError& e) {
    throw ParseError("field '" + field + "': " + e.what());
  }
}

inline nlohmann::json instance_to_json(const AotInstance& inst) {
  const AotTemplate& t = inst.tmpl();
  nlohmann::json params = nlohmann::json::object();
  for (std::size_t i = 0; i < inst.params.size(); ++i) params[t.schema[i].name] = inst.params[i];
  return {{"template", inst.template_id}, {"params", params}, {"pose", pose_to_json(inst.pose)}};
}

inline AotInstance instance_from_json(const nlohmann::json& j, const std::string& ctx = "instance") {
  if (!j.is_object()) throw ParseError(ctx + ": expected an object");
  if (!j.contains("template") || !j["template"].is_string()) throw ParseError(ctx + ".template: missing or not a string");
  const std::string id = j["template"].get<std::string>();
  const AotTemplate* t = nullptr;
  try {
    t = &find_template(id);
  } catch (const LookupError&) {
    throw ParseError(ctx + ".template: unknown template '" + id + "'");
  }
  if (!j.contains("params") || !j["params"].is_object()) throw ParseError(ctx + ".params: missing or not an object");
  AotInstance inst;
  inst.template_id = id;
  for (const auto& e : t->schema.entries()) {
    const auto& pj = j["params"];
    if (!pj.contains(e.name) || !pj[e.name].is_number())
      throw ParseError(ctx + ".params." + e.name + ": missing or not a number");
    const double v = pj[e.name].get<double>();
    if (!(v >= e.lower && v <= e.upper)) {
      std::ostringstream os;
      os << ctx << ".params." << e.name << ": value " << v << " out of bounds [" << e.lower << ", " << e.upper << "]";
      throw ParseError(os.str());
    }
    inst.params.push_back(v);
  }
  for (const auto& [k, v] : j["params"].items()) {
    (void)v;
    t->schema.index_of(k);  // rejects unknown names below
  }
  if (!j.contains("pose")) throw ParseError(ctx + ".pose: missing");
  inst.pose = pose_from_json(j["pose"], ctx + ".pose");
  if (!satisfies_coupling(t->shape, inst.params))
    throw ParseError(ctx + ".params: coupling constraint of '" + id + "' violated");
  return inst;
}

inline std::string serialize_instance(const AotInstance& inst) { return instance_to_json(inst).dump(2) + "\n"; }

// Parses the text form; errors carry line or field context.
inline AotInstance parse_instance(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1;
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    for (std::size_t i = 0; i + 1 < upto; ++i)
      if (text[i] == '\n') ++line;
    throw ParseError("line " + std::to_string(line) + ": " + e.what());
  }
  try {
    return instance_from_json(j);
  } catch (const LookupError& e) {
    throw ParseError(std::string("instance.params: ") + e.what());
  }
}

}  // namespace aot
