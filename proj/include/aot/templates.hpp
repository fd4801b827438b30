#pragma once

// Template registry: parameter schemas, kinds, affordance catalogs and
// composition rules of the built-in analytic templates.

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "aot/errors.hpp"
#include "aot/geometry.hpp"

namespace aot {

enum class TemplateKind { Geometric, Kinematic };
enum class Unit { Length, Angle, Unitless };

// Which closed-form structure a template evaluates.
enum class Shape { Cuboid, Cylinder, Ring, Handle, Lever, Revolute, Prismatic };

inline constexpr double kDefaultLengthLower = 0.01;
inline constexpr double kDefaultLengthUpper = 10.0;

struct ParamSpec {
  std::string name;
  double lower = kDefaultLengthLower;
  double upper = kDefaultLengthUpper;
  Unit unit = Unit::Length;
};

class ParamSchema {
public:
  ParamSchema() = default;
  explicit ParamSchema(std::vector<ParamSpec> entries) : entries_(std::move(entries)) {
    std::unordered_set<std::string> seen;
    for (const auto& e : entries_) {
      if (!(e.lower < e.upper)) throw DomainError("schema entry '" + e.name + "' needs lower < upper");
      if (!seen.insert(e.name).second) throw DomainError("duplicate schema entry '" + e.name + "'");
    }
  }

  std::size_t size() const { return entries_.size(); }
  const ParamSpec& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<ParamSpec>& entries() const { return entries_; }

  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name == name) return i;
    throw LookupError("no parameter named '" + std::string(name) + "'");
  }

  bool contains(std::span<const double> params) const {
    if (params.size() != entries_.size()) return false;
    for (std::size_t i = 0; i < params.size(); ++i)
      if (!(params[i] >= entries_[i].lower && params[i] <= entries_[i].upper)) return false;
    return true;
  }

private:
  std::vector<ParamSpec> entries_;
};

enum class AffordanceKind { Grasp, Force };

struct AffordanceGen {
  std::string id;
  AffordanceKind kind = AffordanceKind::Grasp;
  std::string description;
};

// A child of a composite template: which template it instantiates, where it
// sits relative to the composite frame, and which composite parameters feed it.
struct ChildSpec {
  std::string name;
  std::string template_id;
  std::string pose_rule;
  std::vector<std::string> shared_params;  // composite params forwarded, in child schema order
};

struct AotTemplate {
  std::string id;
  TemplateKind kind = TemplateKind::Geometric;
  Shape shape = Shape::Cuboid;
  ParamSchema schema;
  std::vector<AffordanceGen> affordances;
  std::vector<ChildSpec> children;

  bool is_composite() const { return !children.empty(); }
  bool is_geometric() const { return kind == TemplateKind::Geometric; }

  const AffordanceGen& affordance(std::string_view aid) const {
    for (const auto& a : affordances)
      if (a.id == aid) return a;
    throw LookupError("template '" + id + "' has no affordance '" + std::string(aid) + "'");
  }
};

namespace detail {

inline ParamSpec length(std::string name) { return {std::move(name), kDefaultLengthLower, kDefaultLengthUpper, Unit::Length}; }

inline std::vector<AotTemplate> make_registry() {
  std::vector<AotTemplate> r;

  r.push_back({"cuboid", TemplateKind::Geometric, Shape::Cuboid,
               ParamSchema({length("a"), length("b"), length("c")}),
               {{"grasp_edge", AffordanceKind::Grasp,
                 "fingers close across the thinnest extent at a side-face center"}},
               {}});

  r.push_back({"cylinder", TemplateKind::Geometric, Shape::Cylinder,
               ParamSchema({length("r"), length("h")}),
               {{"grasp_body", AffordanceKind::Grasp, "fingers close across the diameter at a selected height"}},
               {}});

  r.push_back({"ring", TemplateKind::Geometric, Shape::Ring,
               ParamSchema({length("r_maj"), length("r_tube")}),
               {{"grasp_tube", AffordanceKind::Grasp, "fingers close across the tube at a major-circle angle"}},
               {}});

  r.push_back({"revolute", TemplateKind::Kinematic, Shape::Revolute,
               ParamSchema({{"lower", -kPi, kPi, Unit::Angle}, {"upper", -kPi, kPi, Unit::Angle}}),
               {{"force_revolute", AffordanceKind::Force, "tangential direction of increasing joint angle"}},
               {}});

  r.push_back({"prismatic", TemplateKind::Kinematic, Shape::Prismatic,
               ParamSchema({{"lower", -kDefaultLengthUpper, kDefaultLengthUpper, Unit::Length},
                            {"upper", -kDefaultLengthUpper, kDefaultLengthUpper, Unit::Length}}),
               {{"force_prismatic", AffordanceKind::Force, "constant direction along the joint axis"}},
               {}});

  r.push_back({"handle", TemplateKind::Geometric, Shape::Handle,
               ParamSchema({length("r_maj"), length("r_tube"), length("h_stem")}),
               {{"ring.grasp_tube", AffordanceKind::Grasp, "ring child tube grasp"},
                {"stem.grasp_body", AffordanceKind::Grasp, "stem child body grasp"}},
               {{"ring", "ring", "ring plane contains the stem axis; tube touches the stem cap", {"r_maj", "r_tube"}},
                {"stem", "cylinder", "axis along z from the origin, radius equal to the ring tube", {"r_tube", "h_stem"}}}});

  r.push_back({"lever", TemplateKind::Geometric, Shape::Lever,
               ParamSchema({length("a"), length("b"), length("c"), length("r"), length("h")}),
               {{"bar.grasp_edge", AffordanceKind::Grasp, "bar child edge grasp"},
                {"hub.grasp_body", AffordanceKind::Grasp, "hub child body grasp"}},
               {{"bar", "cuboid", "centered at the origin", {"a", "b", "c"}},
                {"hub", "cylinder", "axis through the +z face center of the bar, resting on it", {"r", "h"}}}});
  return r;
}

}  // namespace detail

// The built-in templates. Ids are stable public strings.
inline const std::vector<AotTemplate>& builtin_registry() {
  static const std::vector<AotTemplate> registry = detail::make_registry();
  return registry;
}

inline const AotTemplate& find_template(std::string_view id) {
  for (const auto& t : builtin_registry())
    if (t.id == id) return t;
  throw LookupError("unknown template '" + std::string(id) + "'");
}

// Position of a template in the built-in registry; used as a tie-breaker.
inline std::size_t registry_index(std::string_view id) {
  const auto& reg = builtin_registry();
  for (std::size_t i = 0; i < reg.size(); ++i)
    if (reg[i].id == id) return i;
  throw LookupError("unknown template '" + std::string(id) + "'");
}

inline std::vector<std::string> geometric_template_ids() {
  std::vector<std::string> ids;
  for (const auto& t : builtin_registry())
    if (t.is_geometric()) ids.push_back(t.id);
  return ids;
}

inline std::vector<std::string> basic_geometric_template_ids() { return {"cuboid", "cylinder", "ring"}; }

// Constraints that couple parameters beyond the per-entry bounds. The ring
// tube may not exceed its major radius (the implicit set would stop being a
// torus with a hole).
inline bool satisfies_coupling(Shape shape, std::span<const double> p) {
  switch (shape) {
    case Shape::Ring:
    case Shape::Handle: return p[1] <= p[0];
    case Shape::Revolute:
    case Shape::Prismatic: return p[0] < p[1];
    default: return true;
  }
}

// Clamp params into the schema box and coupling constraints.
inline void project_params(const AotTemplate& t, std::span<double> p) {
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::clamp(p[i], t.schema[i].lower, t.schema[i].upper);
  if ((t.shape == Shape::Ring || t.shape == Shape::Handle) && p[1] > p[0]) p[1] = p[0];
}

}  // namespace aot
