#pragma once

// Application configuration: defaults, overridden by a JSON config file,
// overridden by command-line flags. The resolved configuration is embedded
// in every output so that a run can be reproduced from its artifacts.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "aot/dataset.hpp"
#include "aot/discovery.hpp"
#include "aot/fitter.hpp"
#include "aot/io.hpp"

namespace aot {

inline constexpr const char* kConfigEnvVar = "AOT_CONFIG";

struct AppConfig {
  std::uint64_t seed = 0;
  FitConfig fit;
  double lambda_model = 1e-4;
  double confidence_threshold = 1e-2;
  DatasetConfig dataset;
  DiscoveryConfig discovery;
  EvalTolerances tolerances;
  std::size_t waypoints = kDefaultWaypoints;
  double target_fraction = 1.0;
  double max_opening = kDefaultGripperOpening;
  std::uint32_t mesh_resolution = 64;
  bool ground_truth_bypass = false;  // benchmark plans from ground truth
  // Worker threads; results do not depend on it, so it is not part of the
  // embedded configuration.
  std::size_t jobs = 1;

  FitConfig fit_config() const {
    FitConfig f = fit;
    f.seed = seed;
    f.jobs = jobs;
    return f;
  }

  IdentifyConfig identify_config() const { return {fit_config(), lambda_model, confidence_threshold}; }

  DatasetConfig dataset_config() const {
    DatasetConfig d = dataset;
    d.seed = seed;
    return d;
  }

  DiscoveryConfig discovery_config() const {
    DiscoveryConfig d = discovery;
    d.identify = identify_config();
    d.joint.robust.seed = seed;
    d.max_opening = max_opening;
    return d;
  }

  BenchmarkConfig benchmark_config() const {
    BenchmarkConfig b;
    b.discovery = discovery_config();
    b.tolerances = tolerances;
    b.tolerances.max_opening = max_opening;
    b.waypoints = waypoints;
    b.target_fraction = target_fraction;
    b.ground_truth_bypass = ground_truth_bypass;
    return b;
  }
};

inline void validate_app_config(const AppConfig& c) {
  validate_fit_config(c.fit);
  validate_dataset_config(c.dataset);
  if (!(c.lambda_model >= 0.0)) throw DomainError("lambda_model must be non-negative");
  if (c.waypoints < 1) throw DomainError("waypoints must be >= 1");
  if (!(c.target_fraction > 0.0 && c.target_fraction <= 1.0)) throw DomainError("target_fraction must lie in (0, 1]");
  if (!(c.max_opening > 0.0)) throw DomainError("max_opening must be positive");
  if (c.mesh_resolution < 3) throw DomainError("mesh_resolution must be >= 3");
  const auto& d = c.discovery;
  if (!(d.segment_threshold > 0.0) || !(d.consistency_threshold > 0.0) || !(d.min_lever_arm >= 0.0))
    throw DomainError("discovery thresholds must be positive");
  if (d.grasp_selectors < 1) throw DomainError("grasp_selectors must be >= 1");
  if (d.candidates.empty()) throw DomainError("discovery needs at least one candidate template");
  for (const auto& id : d.candidates)
    if (!find_template(id).is_geometric()) throw DomainError("candidate '" + id + "' is not a geometric template");
  if (!(d.joint.thresholds.theta_min > 0.0) || !(d.joint.thresholds.d_min > 0.0))
    throw DomainError("kinematic thresholds must be positive");
  if (d.joint.robust.iterations < 1 || !(d.joint.robust.inlier_threshold > 0.0))
    throw DomainError("robust registration needs iterations >= 1 and a positive inlier threshold");
  const auto& t = c.tolerances;
  if (!(t.eps_grasp > 0.0) || !(t.eps_track > 0.0) || !(t.success_fraction >= 0.0 && t.success_fraction < 1.0))
    throw DomainError("evaluation tolerances out of range");
}

inline nlohmann::json app_config_to_json(const AppConfig& c) {
  nlohmann::json fit = fit_config_to_json(c.fit);
  fit.erase("seed");
  nlohmann::json dataset = dataset_config_to_json(c.dataset);
  dataset.erase("seed");
  const auto& d = c.discovery;
  return {{"seed", c.seed},
          {"fit", fit},
          {"identify", {{"lambda_model", c.lambda_model}, {"confidence_threshold", c.confidence_threshold}}},
          {"dataset", dataset},
          {"discovery",
           {{"candidates", d.candidates},
            {"segment_threshold", d.segment_threshold},
            {"consistency_threshold", d.consistency_threshold},
            {"min_lever_arm", d.min_lever_arm},
            {"grasp_selectors", d.grasp_selectors},
            {"theta_min", d.joint.thresholds.theta_min},
            {"d_min", d.joint.thresholds.d_min},
            {"robust", d.joint.use_robust},
            {"robust_iterations", d.joint.robust.iterations},
            {"robust_threshold", d.joint.robust.inlier_threshold}}},
          {"evaluation",
           {{"eps_grasp", c.tolerances.eps_grasp},
            {"eps_track", c.tolerances.eps_track},
            {"success_fraction", c.tolerances.success_fraction}}},
          {"plan", {{"waypoints", c.waypoints}, {"target_fraction", c.target_fraction}}},
          {"bench", {{"ground_truth_bypass", c.ground_truth_bypass}}},
          {"gripper", {{"max_opening", c.max_opening}}},
          {"mesh", {{"resolution", c.mesh_resolution}}}};
}

namespace detail {

template <class F>
void for_each_key(const nlohmann::json& j, const std::string& section, F&& f) {
  if (!j.is_object()) throw ParseError(section + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    try {
      if (!f(k, v)) throw ParseError(section + "." + k + ": unknown key");
    } catch (const nlohmann::json::exception&) {
      throw ParseError(section + "." + k + ": wrong value type");
    }
  }
}

}  // namespace detail

// Overlays the keys present in `j` onto `c`. Unknown keys and wrongly typed
// values raise ParseError naming the offending key.
inline AppConfig merge_app_config(AppConfig c, const nlohmann::json& j) {
  detail::for_each_key(j, "config", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "seed") c.seed = v.get<std::uint64_t>();
    else if (k == "fit") {
      if (v.contains("seed")) throw ParseError("fit.seed: set the top-level seed instead");
      c.fit = fit_config_from_json(v, c.fit);
    } else if (k == "identify") {
      detail::for_each_key(v, "identify", [&](const std::string& kk, const nlohmann::json& vv) {
        if (kk == "lambda_model") c.lambda_model = vv.get<double>();
        else if (kk == "confidence_threshold") c.confidence_threshold = vv.get<double>();
        else return false;
        return true;
      });
    } else if (k == "dataset") {
      if (v.contains("seed")) throw ParseError("dataset.seed: set the top-level seed instead");
      c.dataset = dataset_config_from_json(v, c.dataset);
    } else if (k == "discovery") {
      auto& d = c.discovery;
      detail::for_each_key(v, "discovery", [&](const std::string& kk, const nlohmann::json& vv) {
        if (kk == "candidates") d.candidates = vv.get<std::vector<std::string>>();
        else if (kk == "segment_threshold") d.segment_threshold = vv.get<double>();
        else if (kk == "consistency_threshold") d.consistency_threshold = vv.get<double>();
        else if (kk == "min_lever_arm") d.min_lever_arm = vv.get<double>();
        else if (kk == "grasp_selectors") d.grasp_selectors = vv.get<std::size_t>();
        else if (kk == "theta_min") d.joint.thresholds.theta_min = vv.get<double>();
        else if (kk == "d_min") d.joint.thresholds.d_min = vv.get<double>();
        else if (kk == "robust") d.joint.use_robust = vv.get<bool>();
        else if (kk == "robust_iterations") d.joint.robust.iterations = vv.get<std::size_t>();
        else if (kk == "robust_threshold") d.joint.robust.inlier_threshold = vv.get<double>();
        else return false;
        return true;
      });
    } else if (k == "evaluation") {
      detail::for_each_key(v, "evaluation", [&](const std::string& kk, const nlohmann::json& vv) {
        if (kk == "eps_grasp") c.tolerances.eps_grasp = vv.get<double>();
        else if (kk == "eps_track") c.tolerances.eps_track = vv.get<double>();
        else if (kk == "success_fraction") c.tolerances.success_fraction = vv.get<double>();
        else return false;
        return true;
      });
    } else if (k == "plan") {
      detail::for_each_key(v, "plan", [&](const std::string& kk, const nlohmann::json& vv) {
        if (kk == "waypoints") c.waypoints = vv.get<std::size_t>();
        else if (kk == "target_fraction") c.target_fraction = vv.get<double>();
        else return false;
        return true;
      });
    } else if (k == "bench") {
      detail::for_each_key(v, "bench", [&](const std::string& kk, const nlohmann::json& vv) {
        if (kk != "ground_truth_bypass") return false;
        c.ground_truth_bypass = vv.get<bool>();
        return true;
      });
    } else if (k == "gripper") {
      detail::for_each_key(v, "gripper", [&](const std::string& kk, const nlohmann::json& vv) {
        if (kk != "max_opening") return false;
        c.max_opening = vv.get<double>();
        return true;
      });
    } else if (k == "mesh") {
      detail::for_each_key(v, "mesh", [&](const std::string& kk, const nlohmann::json& vv) {
        if (kk != "resolution") return false;
        c.mesh_resolution = vv.get<std::uint32_t>();
        return true;
      });
    } else {
      return false;
    }
    return true;
  });
  try {
    validate_app_config(c);
  } catch (const Error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return c;
}

// Accepts either a bare configuration object or any artifact that embeds
// one under "config" (manifests, reports, fit results).
// Config embedded in an OBJ artifact as a "# aot config {...}" line.
inline std::optional<std::string> embedded_obj_config(const std::string& text) {
  static constexpr std::string_view tag = "# aot config ";
  std::size_t pos = 0;
  while (pos < text.size() && text[pos] == '#') {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line(text.data() + pos, end - pos);
    if (line.starts_with(tag)) return std::string(line.substr(tag.size()));
    pos = end + 1;
  }
  return std::nullopt;
}

inline AppConfig parse_app_config(const std::string& text, const std::string& source, AppConfig base = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(embedded_obj_config(text).value_or(text));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source + ": " + e.what());
  }
  if (j.is_object() && j.contains("config") && j["config"].is_object()) j = j["config"];
  try {
    return merge_app_config(std::move(base), j);
  } catch (const ParseError& e) {
    throw ParseError(source + ": " + e.what());
  }
}

inline AppConfig load_app_config(const std::filesystem::path& path, AppConfig base = {}) {
  return parse_app_config(read_file(path), path.string(), std::move(base));
}

// Config file named by the environment, if any.
inline std::optional<std::filesystem::path> config_path_from_env() {
  const char* v = std::getenv(kConfigEnvVar);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::filesystem::path(v);
}

}  // namespace aot
