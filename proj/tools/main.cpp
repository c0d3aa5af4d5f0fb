#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trackcouple/commands.hpp"
#include "trackcouple/error.hpp"

using namespace trackcouple;

int main(int argc, char** argv) {
  CLI::App app{"trackcouple: coupled pointmap/track/pose refinement on synthetic scenes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", TRACKCOUPLE_VERSION);

  std::vector<std::string> seed_specs;
  std::string config, out;
  int jobs = 1;

  auto* gen = app.add_subcommand("gen", "generate synthetic scenes");
  gen->add_option("--config", config, "scene config JSON");
  gen->add_option("--out", out, "output directory (default $TRACKCOUPLE_OUT/gen or runs/gen)");
  gen->add_option("--seeds", seed_specs, "seeds, e.g. 0-9 or 1,4,7")->delimiter(' ');
  gen->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  OptimizeOptions opt;
  std::string scene_dir;
  auto* optimize = app.add_subcommand("optimize", "refine a scene or a directory of scenes");
  optimize->add_option("scene_dir", scene_dir, "scene or gen output directory")->required();
  optimize->add_option("--config", config, "optimizer config JSON");
  optimize->add_option("--out", out, "output directory (default $TRACKCOUPLE_OUT/optimize or runs/optimize)");
  optimize->add_option("--ablation", opt.ablations, "none, cons, cam, full, selfsup, all (repeatable)")
      ->delimiter(',');
  optimize->add_option("--seeds", seed_specs, "only scenes with these seeds")->delimiter(' ');
  optimize->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  EvalOptions ev;
  std::string pred, gt;
  auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
  eval->add_option("pred", pred, "directory with cameras.txt, tracks.txt, pointmaps/")->required();
  eval->add_option("gt", gt, "ground-truth directory, same layout")->required();
  eval->add_option("--out", out, "output directory (default $TRACKCOUPLE_OUT/eval or runs/eval)");
  eval->add_option("--metrics", ev.metrics, "all, ate, rpe, relpose, tapvid, pointmap, depth")->delimiter(',');
  eval->add_flag("--icp", ev.icp, "refine pointmap alignment with ICP");
  eval->add_option("--focal", ev.focal, "focal length for TAPVid-3D thresholds");
  eval->add_option("--rpe-step", ev.rpe_step, "frame step for RPE")->check(CLI::PositiveNumber);

  GradcheckCliOptions gc;
  auto* grad = app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
  grad->set_help_flag("--help", "Print this help message and exit");  // -h would clash with --h
  grad->add_option("--fixtures", gc.fixtures, "random, noiseless, kink, dynamic, selfsup")->delimiter(',');
  grad->add_option("--seeds", seed_specs, "fixture seeds")->delimiter(' ');
  grad->add_option("--h", gc.h, "finite-difference step");
  grad->add_option("--tol", gc.tol, "relative error tolerance");
  grad->add_option("--corruption", gc.corruption, "scale analytic gradients (self-test)");
  grad->add_option("--out", out, "write gradcheck.csv here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  std::vector<std::uint64_t> seeds;
  try {
    seeds = parse_seeds(seed_specs);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  auto out_or = [&](const char* command) { return out.empty() ? default_output(command) : std::filesystem::path(out); };
  std::optional<std::filesystem::path> config_path;
  if (!config.empty()) config_path = config;

  if (*gen) {
    return run_gen(GenOptions{config_path, out_or("gen"), seeds, jobs}, std::cout, std::cerr);
  }
  if (*optimize) {
    opt.scene_dir = scene_dir;
    opt.config = config_path;
    opt.out = out_or("optimize");
    opt.seeds = seeds;
    opt.jobs = jobs;
    return run_optimize(opt, std::cout, std::cerr);
  }
  if (*eval) {
    ev.pred = pred;
    ev.gt = gt;
    ev.out = out_or("eval");
    return run_eval(ev, std::cout, std::cerr);
  }
  if (!seeds.empty()) gc.seeds = seeds;
  if (!out.empty()) gc.out = out;
  return run_gradcheck_cli(gc, std::cout, std::cerr);
}
