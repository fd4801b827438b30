#pragma once

// Synthetic articulated scenes and dataset generation.
//
// Each scene is one moving part on a one-DOF joint in front of a static base
// body, built in an object frame and then placed in the world by a random
// rigid pose. Moving parts are thin enough for the default gripper where it
// matters (grasped extents <= 0.07 units).

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "aot/errors.hpp"
#include "aot/io.hpp"
#include "aot/joint.hpp"
#include "aot/parallel.hpp"
#include "aot/renderer.hpp"

namespace aot {

enum class SceneKind { Door, Drawer, Lever, Bucket, Knob, Bar };

inline const std::vector<std::string>& scene_kind_names() {
  static const std::vector<std::string> names{"door", "drawer", "lever", "bucket", "knob", "bar"};
  return names;
}

inline std::string to_string(SceneKind k) { return scene_kind_names()[static_cast<std::size_t>(k)]; }

inline SceneKind scene_kind_from_string(const std::string& s) {
  const auto& names = scene_kind_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == s) return static_cast<SceneKind>(i);
  throw ParseError("unknown scene kind '" + s + "'");
}

// Template id that the moving part of each scene kind is an instance of.
inline std::string scene_part_template(SceneKind k) {
  switch (k) {
    case SceneKind::Door:
    case SceneKind::Drawer: return "cuboid";
    case SceneKind::Lever: return "lever";
    case SceneKind::Bucket: return "ring";
    case SceneKind::Knob: return "handle";
    case SceneKind::Bar: return "cylinder";
  }
  return "cuboid";
}

struct DatasetConfig {
  std::size_t count = 200;
  std::uint64_t seed = 0;
  std::size_t points = 2000;  // per cloud, moving part plus base
  std::vector<std::string> kinds = scene_kind_names();
  NoiseConfig noise;
  Vec3d camera{5, 0, 0};
  double placement_spread = 0.3;  // world translation of each scene, per axis
};

inline void validate_dataset_config(const DatasetConfig& c) {
  if (c.count < 1) throw DomainError("dataset count must be >= 1");
  if (c.points < 16) throw DomainError("dataset points must be >= 16");
  if (c.kinds.empty()) throw DomainError("dataset needs at least one scene kind");
  for (const auto& k : c.kinds) scene_kind_from_string(k);
  if (!(c.placement_spread >= 0.0)) throw DomainError("placement_spread must be non-negative");
}

struct GeneratedScene {
  std::size_t index = 0;
  SceneKind kind = SceneKind::Door;
  std::uint64_t seed = 0;
  SceneSpec spec;
};

namespace detail {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Uniformly distributed rotation from a normalized Gaussian quaternion.
inline Mat3d uniform_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  double w = n(rng), x = n(rng), y = n(rng), z = n(rng);
  const double s = std::sqrt(w * w + x * x + y * y + z * z);
  if (s < 1e-12) return Mat3d::identity();
  w /= s, x /= s, y /= s, z /= s;
  Mat3d r;
  r(0, 0) = 1 - 2 * (y * y + z * z), r(0, 1) = 2 * (x * y - w * z), r(0, 2) = 2 * (x * z + w * y);
  r(1, 0) = 2 * (x * y + w * z), r(1, 1) = 1 - 2 * (x * x + z * z), r(1, 2) = 2 * (y * z - w * x);
  r(2, 0) = 2 * (x * z - w * y), r(2, 1) = 2 * (y * z + w * x), r(2, 2) = 1 - 2 * (x * x + y * y);
  return orthonormalize(r);
}

// Scene in its object frame: part pose, base bodies and joint.
inline SceneSpec object_frame_scene(SceneKind kind, std::mt19937_64& rng) {
  SceneSpec s;
  auto U = [&](double lo, double hi) { return uniform(rng, lo, hi); };
  const double angle = U(0.6, 1.5);
  switch (kind) {
    case SceneKind::Door: {
      // Panel in the xy plane, hinged along its -x edge, opening towards +z.
      const double a = U(0.25, 0.5), b = U(0.3, 0.6), c = U(0.015, 0.035), d = U(0.2, 0.4);
      s.part = make_instance("cuboid", {a, b, c});
      s.base.push_back(make_instance("cuboid", {a, b, d}, translation_pose({0, 0, -c - 0.01 - d})));
      s.joint = {JointKind::Revolute, {0, -1, 0}, {-a, 0, -c}, 0.0, angle};
      break;
    }
    case SceneKind::Drawer: {
      const double a = U(0.2, 0.4), b = U(0.1, 0.2), c = U(0.015, 0.035), d = U(0.2, 0.4);
      s.part = make_instance("cuboid", {a, b, c});
      s.base.push_back(make_instance("cuboid", {a + 0.05, b + 0.05, d}, translation_pose({0, 0, -c - 0.01 - d})));
      s.joint = {JointKind::Prismatic, {0, 0, 1}, {}, 0.0, U(0.2, 0.45)};
      break;
    }
    case SceneKind::Lever: {
      // Hub points into the base plate; the joint turns about the hub axis.
      const double a = U(0.15, 0.3), b = U(0.03, 0.06), c = U(0.015, 0.03), r = U(0.02, 0.035), h = U(0.03, 0.06);
      s.part = make_instance("lever", {a, b, c, r, h}, rotation_pose(rot_x(kPi)));
      const double d = U(0.02, 0.05);
      s.base.push_back(make_instance("cuboid", {a + 0.1, a + 0.1, d}, translation_pose({0, 0, -c - 2 * h - d})));
      s.joint = {JointKind::Revolute, {0, 0, 1}, {}, 0.0, angle};
      break;
    }
    case SceneKind::Bucket: {
      // Ring in the xy plane swinging about its x diameter above a body.
      const double rm = U(0.12, 0.3), rt = U(0.012, 0.03), d = U(0.15, 0.3);
      s.part = make_instance("ring", {rm, rt});
      s.base.push_back(make_instance("cuboid", {rm, rm, d}, translation_pose({0, 0, -rm - rt - 0.03 - d})));
      s.joint = {JointKind::Revolute, {1, 0, 0}, {}, 0.0, angle};
      break;
    }
    case SceneKind::Knob: {
      // Handle standing on a plate, turning about its stem.
      const double rm = U(0.06, 0.12), rt = U(0.012, 0.03), hs = U(0.03, 0.08), d = U(0.02, 0.05);
      s.part = make_instance("handle", {rm, rt, hs});
      s.base.push_back(make_instance("cuboid", {rm + 0.1, rm + 0.1, d}, translation_pose({0, 0, -d - 0.005})));
      s.joint = {JointKind::Revolute, {0, 0, 1}, {}, 0.0, angle};
      break;
    }
    case SceneKind::Bar: {
      // Upright bar sliding sideways along a rail body.
      const double r = U(0.012, 0.035), h = U(0.15, 0.35), d = U(0.05, 0.15);
      s.part = make_instance("cylinder", {r, h});
      s.base.push_back(make_instance("cuboid", {0.6, d, h + 0.05}, translation_pose({0.2, -r - 0.02 - d, 0})));
      s.joint = {JointKind::Prismatic, {1, 0, 0}, {}, 0.0, U(0.15, 0.4)};
      break;
    }
  }
  return s;
}

inline KinematicParams transform_joint(const Pose& g, KinematicParams k) {
  k.axis = normalized(g.rotate(k.axis));
  k.pivot = g.apply(k.pivot);
  return k;
}

}  // namespace detail

// Scene `index` of a dataset: kind cycles through `cfg.kinds`, all random
// choices come from the per-scene seed `cfg.seed + index`.
inline GeneratedScene make_scene(const DatasetConfig& cfg, std::size_t index) {
  validate_dataset_config(cfg);
  GeneratedScene g;
  g.index = index;
  g.kind = scene_kind_from_string(cfg.kinds[index % cfg.kinds.size()]);
  g.seed = cfg.seed + index;
  std::mt19937_64 rng(g.seed);
  SceneSpec s = detail::object_frame_scene(g.kind, rng);
  const double sp = cfg.placement_spread;
  const Pose world{detail::uniform_rotation(rng),
                   {detail::uniform(rng, -sp, sp), detail::uniform(rng, -sp, sp), detail::uniform(rng, -sp, sp)}};
  s.part.pose = compose(world, s.part.pose);
  for (auto& b : s.base) b.pose = compose(world, b.pose);
  s.joint = detail::transform_joint(world, s.joint);
  s.state_initial = 0.0;
  s.state_final = 1.0;
  s.camera = cfg.camera;
  s.look_at = {0, 0, 0};
  s.noise = cfg.noise;
  validate_scene(s);
  g.spec = s;
  return g;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json noise_to_json(const NoiseConfig& n) {
  return {{"sigma_rel", n.sigma_rel},
          {"dropout", n.dropout},
          {"outliers", n.outliers},
          {"partial", n.partial},
          {"flip_factor", n.flip_factor}};
}

inline NoiseConfig noise_from_json(const nlohmann::json& j, NoiseConfig n = {}) {
  if (!j.is_object()) throw ParseError("noise config must be an object");
  for (const auto& [k, v] : j.items()) {
    try {
      if (k == "sigma_rel") n.sigma_rel = v.get<double>();
      else if (k == "dropout") n.dropout = v.get<double>();
      else if (k == "outliers") n.outliers = v.get<double>();
      else if (k == "partial") n.partial = v.get<bool>();
      else if (k == "flip_factor") n.flip_factor = v.get<double>();
      else throw ParseError("noise." + k + ": unknown key");
    } catch (const nlohmann::json::exception&) {
      throw ParseError("noise." + k + ": wrong value type");
    }
  }
  if (!(n.sigma_rel >= 0.0) || !(n.dropout >= 0.0 && n.dropout < 1.0) || !(n.outliers >= 0.0 && n.outliers < 1.0))
    throw ParseError("noise: sigma_rel must be >= 0 and fractions in [0, 1)");
  if (!(n.flip_factor > 1.0)) throw ParseError("noise.flip_factor must exceed 1");
  return n;
}

inline nlohmann::json dataset_config_to_json(const DatasetConfig& c) {
  return {{"count", c.count},
          {"seed", c.seed},
          {"points", c.points},
          {"kinds", c.kinds},
          {"noise", noise_to_json(c.noise)},
          {"camera", vec3_to_json(c.camera)},
          {"placement_spread", c.placement_spread}};
}

inline DatasetConfig dataset_config_from_json(const nlohmann::json& j, DatasetConfig c = {}) {
  if (!j.is_object()) throw ParseError("dataset config must be an object");
  for (const auto& [k, v] : j.items()) {
    try {
      if (k == "count") c.count = v.get<std::size_t>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "points") c.points = v.get<std::size_t>();
      else if (k == "kinds") c.kinds = v.get<std::vector<std::string>>();
      else if (k == "noise") c.noise = noise_from_json(v, c.noise);
      else if (k == "camera") c.camera = vec3_from_json(v, "dataset.camera");
      else if (k == "placement_spread") c.placement_spread = v.get<double>();
      else throw ParseError("dataset." + k + ": unknown key");
    } catch (const nlohmann::json::exception&) {
      throw ParseError("dataset." + k + ": wrong value type");
    }
  }
  try {
    validate_dataset_config(c);
  } catch (const DomainError& e) {
    throw ParseError(std::string("dataset: ") + e.what());
  }
  return c;
}

inline nlohmann::json scene_to_json(const SceneSpec& s) {
  nlohmann::json base = nlohmann::json::array();
  for (const auto& b : s.base) base.push_back(instance_to_json(b));
  return {{"part", instance_to_json(s.part)},
          {"base", base},
          {"joint", joint_to_json(s.joint)},
          {"state_initial", s.state_initial},
          {"state_final", s.state_final},
          {"camera", vec3_to_json(s.camera)},
          {"look_at", vec3_to_json(s.look_at)},
          {"noise", noise_to_json(s.noise)},
          {"moving_share", s.moving_share}};
}

inline SceneSpec scene_from_json(const nlohmann::json& j) {
  try {
    SceneSpec s;
    s.part = instance_from_json(j.at("part"), "scene.part");
    for (const auto& b : j.at("base")) s.base.push_back(instance_from_json(b, "scene.base"));
    s.joint = joint_from_json(j.at("joint"));
    s.state_initial = j.at("state_initial").get<double>();
    s.state_final = j.at("state_final").get<double>();
    s.camera = vec3_from_json(j.at("camera"), "scene.camera");
    s.look_at = vec3_from_json(j.at("look_at"), "scene.look_at");
    s.noise = noise_from_json(j.at("noise"));
    s.moving_share = j.at("moving_share").get<double>();
    validate_scene(s);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scene: ") + e.what());
  } catch (const DomainError& e) {
    throw ParseError(std::string("scene: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Dataset on disk

struct ManifestEntry {
  std::size_t index = 0;
  std::string id;
  SceneKind kind = SceneKind::Door;
  std::uint64_t seed = 0;
  std::string initial_file, final_file;  // relative to the manifest directory
  SceneSpec scene;
};

struct Manifest {
  nlohmann::json config;  // resolved configuration that produced the dataset
  std::vector<ManifestEntry> entries;
  std::filesystem::path directory;  // where the cloud files live
};

inline constexpr const char* kManifestName = "manifest.json";

inline std::string scene_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04zu", index);
  return buf;
}

inline nlohmann::json manifest_to_json(const Manifest& m) {
  nlohmann::json scenes = nlohmann::json::array();
  for (const auto& e : m.entries)
    scenes.push_back({{"index", e.index},
                      {"id", e.id},
                      {"kind", to_string(e.kind)},
                      {"template", e.scene.part.template_id},
                      {"seed", e.seed},
                      {"files", {{"initial", e.initial_file}, {"final", e.final_file}}},
                      {"scene", scene_to_json(e.scene)}});
  return {{"format", "aot-manifest/1"}, {"config", m.config}, {"scenes", scenes}};
}

inline Manifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& directory) {
  Manifest m;
  m.directory = directory;
  try {
    if (j.at("format").get<std::string>() != "aot-manifest/1") throw ParseError("manifest: unsupported format");
    m.config = j.at("config");
    for (const auto& s : j.at("scenes")) {
      ManifestEntry e;
      e.index = s.at("index").get<std::size_t>();
      e.id = s.at("id").get<std::string>();
      e.kind = scene_kind_from_string(s.at("kind").get<std::string>());
      e.seed = s.at("seed").get<std::uint64_t>();
      e.initial_file = s.at("files").at("initial").get<std::string>();
      e.final_file = s.at("files").at("final").get<std::string>();
      e.scene = scene_from_json(s.at("scene"));
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  return m;
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return manifest_from_json(j, path.parent_path());
}

inline CloudPair load_entry_pair(const Manifest& m, const ManifestEntry& e) {
  CloudPair pair;
  pair.initial = read_ply(m.directory / e.initial_file);
  pair.final = read_ply(m.directory / e.final_file);
  pair.corresponding = pair.initial.size() == pair.final.size();
  return pair;
}

// Writes one PLY pair per scene plus the manifest into `out_dir` and returns
// the manifest. `config` is embedded verbatim; scenes are rendered in
// parallel with per-scene seeds, so the bytes do not depend on `jobs`.
inline Manifest generate_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir,
                                 const nlohmann::json& config, std::size_t jobs = 1) {
  validate_dataset_config(cfg);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir))
    throw IoError("cannot create output directory '" + out_dir.string() + "'");
  Manifest m;
  m.config = config;
  m.directory = out_dir;
  m.entries.resize(cfg.count);
  parallel_for(cfg.count, jobs, [&](std::size_t i) {
    const GeneratedScene g = make_scene(cfg, i);
    ManifestEntry& e = m.entries[i];
    e.index = i;
    e.id = scene_id(i);
    e.kind = g.kind;
    e.seed = g.seed;
    e.scene = g.spec;
    e.initial_file = e.id + "_initial.ply";
    e.final_file = e.id + "_final.ply";
    const CloudPair pair = render_observation(g.spec, cfg.points, g.seed);
    const std::string tag = "aot scene=" + e.id + " seed=" + std::to_string(e.seed);
    write_ply(out_dir / e.initial_file, pair.initial, {tag + " state=initial"});
    write_ply(out_dir / e.final_file, pair.final, {tag + " state=final"});
  });
  write_file(out_dir / kManifestName, manifest_to_json(m).dump(2) + "\n");
  return m;
}

}  // namespace aot
