// Walkthrough: render one articulated scene, discover its part, joint and
// grasp, plan an interaction and score it against the ground truth. Writes
// the observed clouds and the fitted part mesh to the output directory.

#include <cstdio>
#include <filesystem>

#include "aot/aot.hpp"

int main(int argc, char** argv) {
  using namespace aot;
  const std::filesystem::path out = argc > 1 ? argv[1] : "demo_out";
  std::filesystem::create_directories(out);

  DatasetConfig cfg;
  cfg.kinds = {"door"};
  cfg.seed = 42;
  const GeneratedScene scene = make_scene(cfg, 0);
  const CloudPair pair = render_observation(scene.spec, cfg.points, scene.seed);
  write_ply(out / "initial.ply", pair.initial);
  write_ply(out / "final.ply", pair.final);
  std::printf("scene: %s, %zu + %zu points with default sensor noise\n", to_string(scene.kind).c_str(),
              pair.initial.size(), pair.final.size());

  try {
    const DiscoveryResult r = discover(pair, {}, scene.spec.joint);
    std::printf("identified: %s (score %.3g)\n", r.instance.template_id.c_str(), r.identification.best().score);
    for (const auto& f : r.identification.ranking) std::printf("  %-9s %.4g\n", f.template_id.c_str(), f.score);
    const auto& k = r.joint.joint;
    std::printf("joint: %s, axis (%.3f %.3f %.3f), range %.3f, cosine error %.2e\n", to_string(k.kind).c_str(),
                k.axis.x, k.axis.y, k.axis.z, k.range(), r.joint.errors->cosine_distance);
    std::printf("grasp: %s at selector %.3f, width %.3f\n", r.grasp.affordance.c_str(), r.grasp.selector,
                r.grasp.width);
    write_obj(out / "part.obj", render_mesh(r.instance, 48), {"fitted " + r.instance.template_id});

    const InteractionPlan plan = plan_interaction(r, 1.0);
    const EvalOutcome o = evaluate(plan, scene.spec);
    std::printf("plan: %zu waypoints -> %s (fraction %.3f, deviation %.4f, reason %s)\n", plan.waypoints.size(),
                o.success ? "success" : "failure", o.fraction, o.deviation, to_string(o.reason).c_str());
  } catch (const Error& e) {
    std::fprintf(stderr, "discovery failed: %s\n", e.what());
    return 1;
  }
  std::printf("wrote %s\n", out.string().c_str());
  return 0;
}
