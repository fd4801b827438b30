#pragma once

// Command-line front end. `run` parses arguments, resolves the
// configuration (defaults <- config file <- flags) and dispatches to one
// command. Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aot/aot.hpp"

namespace aot::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Raised for invalid arguments detected after parsing.
class UsageError : public Error {
  using Error::Error;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string params_line(const AotInstance& inst) {
  std::string s;
  const auto& schema = inst.tmpl().schema;
  for (std::size_t i = 0; i < inst.params.size(); ++i) s += (i ? " " : "") + schema[i].name + "=" + fmt(inst.params[i]);
  return s;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_file(path, j.dump(2) + "\n");
}

inline AotInstance instance_from_artifact(const std::string& text, const std::string& source) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source + ": " + e.what());
  }
  // Accept a bare instance or the outputs of `fit` and `discover`.
  if (j.contains("template")) return instance_from_json(j, source);
  if (j.contains("result") && j["result"].contains("instance")) return instance_from_json(j["result"]["instance"], source);
  if (j.contains("discovery") && j["discovery"].contains("instance"))
    return instance_from_json(j["discovery"]["instance"], source);
  throw ParseError(source + ": no instance found");
}

}  // namespace detail

struct Options {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  std::optional<std::size_t> jobs;
  // generate
  std::optional<std::size_t> count;
  std::optional<std::size_t> points;
  bool clean = false;
  bool partial = false;
  std::vector<std::string> kinds;
  // fit
  std::string cloud;
  std::string template_id = "auto";
  std::string mesh;
  // discover
  std::string initial, final;
  std::optional<double> target;
  // bench
  std::string manifest;
  bool ground_truth = false;
  // export-mesh
  std::string instance;
  std::optional<std::uint32_t> resolution;
};

inline AppConfig resolve_config(const Options& o) {
  AppConfig c;
  std::optional<std::filesystem::path> path;
  if (!o.config.empty()) path = o.config;
  else path = config_path_from_env();
  if (path) {
    if (!std::filesystem::exists(*path)) throw UsageError("config file '" + path->string() + "' does not exist");
    try {
      c = load_app_config(*path);
    } catch (const ParseError& e) {
      throw UsageError(e.what());
    }
  }
  if (o.seed) c.seed = *o.seed;
  if (o.jobs) c.jobs = *o.jobs;
  if (o.count) c.dataset.count = *o.count;
  if (o.points) c.dataset.points = *o.points;
  if (o.clean) c.dataset.noise = NoiseConfig::none();
  if (o.partial) c.dataset.noise.partial = true;
  if (!o.kinds.empty()) c.dataset.kinds = o.kinds;
  if (o.target) c.target_fraction = *o.target;
  if (o.resolution) c.mesh_resolution = *o.resolution;
  if (o.ground_truth) c.ground_truth_bypass = true;
  try {
    validate_app_config(c);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return c;
}

inline int cmd_generate(const AppConfig& c, const Options& o, std::ostream& out) {
  const std::filesystem::path dir = o.out.empty() ? std::filesystem::path("dataset") : std::filesystem::path(o.out);
  const Manifest m = generate_dataset(c.dataset_config(), dir, app_config_to_json(c), c.jobs);
  out << "wrote " << m.entries.size() << " scenes\n" << (dir / kManifestName).string() << "\n";
  return kExitOk;
}

inline int cmd_fit(const AppConfig& c, const Options& o, std::ostream& out) {
  const PointCloud cloud = read_ply(o.cloud);
  nlohmann::json result;
  FitResult fit;
  if (o.template_id == "auto") {
    const IdentificationResult id = identify_ontology(cloud, c.discovery.candidates, c.identify_config());
    nlohmann::json ranking = nlohmann::json::array();
    for (const auto& r : id.ranking) {
      nlohmann::json row = {{"template", r.template_id}, {"score", std::isfinite(r.score) ? nlohmann::json(r.score) : nlohmann::json()}};
      if (!r.error.empty()) row["error"] = r.error;
      ranking.push_back(row);
    }
    const RankedFit& best = id.best();
    if (!best.fit) throw OptimizationError("no candidate template could be fitted", best.error);
    fit = *best.fit;
    result = fit_result_to_json(fit);
    result["ranking"] = ranking;
    result["low_confidence"] = id.low_confidence;
  } else {
    const AotTemplate& t = find_template(o.template_id);
    if (!t.is_geometric()) throw UsageError("template '" + o.template_id + "' is kinematic and cannot be fitted");
    fit = fit_parameters(t, cloud, c.fit_config());
    result = fit_result_to_json(fit);
  }
  out << "template " << fit.instance.template_id << "\n"
      << "params " << detail::params_line(fit.instance) << "\n"
      << "loss " << detail::fmt(fit.loss) << "\n";
  const nlohmann::json config = app_config_to_json(c);
  if (!o.out.empty())
    detail::write_json(o.out, {{"format", "aot-fit/1"}, {"config", config}, {"input", o.cloud}, {"result", result}});
  if (!o.mesh.empty()) write_obj(o.mesh, render_mesh(fit.instance, c.mesh_resolution), {"aot config " + config.dump()});
  return kExitOk;
}

inline int cmd_discover(const AppConfig& c, const Options& o, std::ostream& out) {
  CloudPair pair;
  pair.initial = read_ply(o.initial);
  pair.final = read_ply(o.final);
  pair.corresponding = pair.initial.size() == pair.final.size();
  const DiscoveryResult r = discover(pair, c.discovery_config());
  const InteractionPlan plan = plan_interaction(r, c.target_fraction, c.waypoints);
  const auto& k = r.joint.joint;
  out << "template " << r.instance.template_id << "\n"
      << "params " << detail::params_line(r.instance) << "\n"
      << "joint " << to_string(k.kind) << " axis " << detail::fmt(k.axis.x) << " " << detail::fmt(k.axis.y) << " "
      << detail::fmt(k.axis.z);
  if (k.kind == JointKind::Revolute)
    out << " pivot " << detail::fmt(k.pivot.x) << " " << detail::fmt(k.pivot.y) << " " << detail::fmt(k.pivot.z);
  out << " range " << detail::fmt(k.range()) << "\n"
      << "grasp " << r.grasp.affordance << " selector " << detail::fmt(r.grasp.selector) << "\n";
  if (!o.out.empty())
    detail::write_json(o.out, {{"format", "aot-discovery/1"},
                               {"config", app_config_to_json(c)},
                               {"inputs", {o.initial, o.final}},
                               {"discovery", discovery_to_json(r)},
                               {"plan", plan_to_json(plan)}});
  return kExitOk;
}

inline int cmd_bench(const AppConfig& c, const Options& o, std::ostream& out) {
  const Manifest m = read_manifest(o.manifest);
  const BenchmarkReport rep = run_benchmark(m, c.benchmark_config(), c.jobs);
  const nlohmann::json config = app_config_to_json(c);
  const auto& a = rep.aggregate;
  char line[160];
  std::snprintf(line, sizeof line, "success %.1f%% (%zu/%zu)\nidentification %.1f%%\n", 100.0 * a.success_rate,
                a.successes, a.scenes, 100.0 * a.identification_accuracy);
  out << line;
  const std::filesystem::path path = o.out.empty() ? std::filesystem::path("report.json") : std::filesystem::path(o.out);
  detail::write_json(path, report_to_json(rep, config));
  out << path.string() << "\n";
  return kExitOk;
}

inline int cmd_export_mesh(const AppConfig& c, const Options& o, std::ostream& out) {
  const AotInstance inst = detail::instance_from_artifact(read_file(o.instance), o.instance);
  if (!inst.tmpl().is_geometric()) throw UsageError("kinematic instances have no mesh");
  const TriMesh mesh = render_mesh(inst, c.mesh_resolution);
  const std::filesystem::path path = o.out.empty() ? std::filesystem::path("mesh.obj") : std::filesystem::path(o.out);
  write_obj(path, mesh, {"aot config " + app_config_to_json(c).dump()});
  out << mesh.vertices.size() << " vertices, " << mesh.triangles.size() << " triangles\n" << path.string() << "\n";
  return kExitOk;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Analytic ontology templates: render, fit, discover and benchmark articulated parts", "aot"};
  app.require_subcommand(1);
  Options o;
  // Common flags are accepted before or after the command name.
  const auto common = [&o](CLI::App* a) {
    a->add_option("--seed", o.seed, "random seed for every stochastic step");
    a->add_option("--config", o.config, "JSON config file (default: $" + std::string(kConfigEnvVar) + ")");
    a->add_option("--out", o.out, "output path");
    a->add_option("--jobs", o.jobs, "worker threads, 0 = all cores; does not change results");
  };
  common(&app);
  auto* gen = app.add_subcommand("generate", "render a synthetic dataset of articulated scenes");
  common(gen);
  gen->add_option("--count", o.count, "number of scenes")->check(CLI::PositiveNumber);
  gen->add_option("--points", o.points, "points per cloud")->check(CLI::Range(16, 10000000));
  gen->add_flag("--clean", o.clean, "disable noise, dropout and outliers");
  gen->add_flag("--partial", o.partial, "keep only points visible from the camera");
  gen->add_option("--kinds", o.kinds, "scene kinds to cycle through")->check(CLI::IsMember(scene_kind_names()));

  auto* fit = app.add_subcommand("fit", "fit a template (or identify one with 'auto') to a PLY cloud");
  common(fit);
  fit->add_option("cloud", o.cloud, "input PLY")->required()->check(CLI::ExistingFile);
  fit->add_option("template", o.template_id, "template id or 'auto'");
  fit->add_option("--mesh", o.mesh, "also write the fitted mesh as OBJ");

  auto* disc = app.add_subcommand("discover", "discover part, joint and grasp from a pair of PLY clouds");
  common(disc);
  disc->add_option("initial", o.initial, "initial-state PLY")->required()->check(CLI::ExistingFile);
  disc->add_option("final", o.final, "final-state PLY")->required()->check(CLI::ExistingFile);
  disc->add_option("--target", o.target, "planned share of the estimated range")->check(CLI::Range(0.0, 1.0));

  auto* bench = app.add_subcommand("bench", "run the closed-loop benchmark on a dataset manifest");
  common(bench);
  bench->add_option("manifest", o.manifest, "manifest.json from 'generate'")->required()->check(CLI::ExistingFile);
  bench->add_flag("--gt", o.ground_truth, "plan from ground truth, skipping discovery");

  auto* exp = app.add_subcommand("export-mesh", "write the mesh of an instance as OBJ");
  common(exp);
  exp->add_option("instance", o.instance, "instance JSON, or a fit/discover output")->required()->check(CLI::ExistingFile);
  exp->add_option("--resolution", o.resolution, "angular resolution of curved surfaces")->check(CLI::Range(3, 4096));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o_out, o_err;
    const int code = app.exit(e, o_out, o_err);
    out << o_out.str();
    err << o_err.str();
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    if (fit->parsed() && o.template_id != "auto") find_template(o.template_id);
    const AppConfig c = resolve_config(o);
    if (gen->parsed()) return cmd_generate(c, o, out);
    if (fit->parsed()) return cmd_fit(c, o, out);
    if (disc->parsed()) return cmd_discover(c, o, out);
    if (bench->parsed()) return cmd_bench(c, o, out);
    return cmd_export_mesh(c, o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const LookupError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const OptimizationError& e) {
    err << "error: " << e.what() << "\ntraces: " << e.traces() << "\n";
    return kExitFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace aot::cli
