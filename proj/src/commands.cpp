#include "trackcouple/commands.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "io_util.hpp"
#include "trackcouple/config.hpp"
#include "trackcouple/error.hpp"
#include "trackcouple/formats.hpp"
#include "trackcouple/gradcheck.hpp"
#include "trackcouple/metrics.hpp"
#include "trackcouple/optimizer.hpp"
#include "trackcouple/synthetic.hpp"

#ifndef TRACKCOUPLE_VERSION
#define TRACKCOUPLE_VERSION "0.0.0"
#endif

namespace trackcouple {

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigInvalid:
    case ErrorCode::kMissingTargets: return kExitConfig;
    case ErrorCode::kIo:
    case ErrorCode::kFormat: return kExitIo;
    case ErrorCode::kDiverged: return kExitDiverged;
    default: return kExitFailure;
  }
}

// Runs `body` and maps library errors onto exit codes.
int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = detail::open_out(path, false);
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

void write_json(const fs::path& path, const Json& doc) { write_text(path, doc.dump(2) + "\n"); }

// Non-finite numbers become null.
Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

std::string seed_dir_name(std::uint64_t seed) {
  std::ostringstream s;
  s << "seed_" << std::setw(4) << std::setfill('0') << seed;
  return s.str();
}

// Runs job(k) for k in [0, n) on up to `jobs` threads. The first exception
// is rethrown after all workers finish.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& job) {
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex m;
  auto worker = [&] {
    for (std::size_t k = next++; k < n; k = next++) {
      try {
        job(k);
      } catch (...) {
        std::lock_guard<std::mutex> lock(m);
        if (!first) first = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first) std::rethrow_exception(first);
}

Json manifest(const std::string& command, const Json& inputs, const std::vector<std::uint64_t>& seeds,
              const fs::path& out) {
  return Json{{"tool", "trackcouple"},
              {"version", TRACKCOUPLE_VERSION},
              {"command", command},
              {"inputs", inputs},
              {"seeds", seeds},
              {"output_dir", out.generic_string()},
              {"timestamp", manifest_timestamp()}};
}

Json metrics_json(const StateMetrics& m) {
  return Json{{"pose_error", number(m.pose_error)},
              {"ate", number(m.ate)},
              {"pointmap_error", number(m.pointmap_error)},
              {"track_error", number(m.track_error)}};
}

std::string csv_number(double v) { return std::isfinite(v) ? format_double(v) : std::string(); }

}  // namespace

std::vector<std::uint64_t> parse_seeds(const std::vector<std::string>& specs) {
  std::vector<std::uint64_t> seeds;
  auto parse_one = [](const std::string& s) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
      throw Error(ErrorCode::kConfigInvalid, "seeds: not a non-negative integer: '" + s + "'");
    }
    return v;
  };
  for (const auto& spec : specs) {
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      const auto dash = item.find('-');
      if (dash == std::string::npos) {
        seeds.push_back(parse_one(item));
      } else {
        const auto lo = parse_one(item.substr(0, dash));
        const auto hi = parse_one(item.substr(dash + 1));
        if (hi < lo || hi - lo > 100000) throw Error(ErrorCode::kConfigInvalid, "seeds: bad range '" + item + "'");
        for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
      }
    }
  }
  return seeds;
}

fs::path default_output(const std::string& command) {
  const char* root = std::getenv("TRACKCOUPLE_OUT");
  return fs::path(root && *root ? root : "runs") / command;
}

std::string manifest_timestamp() {
  std::time_t t = 0;
  if (const char* e = std::getenv("SOURCE_DATE_EPOCH"); e && *e) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(e, e + std::char_traits<char>::length(e), v);
    if (ec == std::errc() && *ptr == '\0') t = static_cast<std::time_t>(v);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// gen

int run_gen(const GenOptions& options, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    SceneConfig base;
    Json inputs = Json::object();
    if (options.config) {
      base = scene_config_from_json(load_json(*options.config));
      inputs["config_path"] = options.config->generic_string();
    }
    base.validate();
    std::vector<std::uint64_t> seeds = options.seeds.empty() ? std::vector<std::uint64_t>{base.seed} : options.seeds;
    inputs["scene_config"] = to_json(base);

    parallel_for(seeds.size(), options.jobs, [&](std::size_t k) {
      SceneConfig c = base;
      c.seed = seeds[k];
      write_scene(options.out / seed_dir_name(seeds[k]), generate(c));
    });
    write_json(options.out / "manifest.json", manifest("gen", inputs, seeds, options.out));
    log << "generated " << seeds.size() << " scene(s) in " << options.out.generic_string() << '\n';
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// optimize

namespace {

struct SceneRef {
  std::string name;
  fs::path dir;
};

std::vector<SceneRef> discover_scenes(const fs::path& root) {
  if (!fs::exists(root)) throw Error(ErrorCode::kIo, "missing directory: " + root.string());
  if (fs::exists(root / "scene.json")) return {{root.filename().string(), root}};
  std::vector<SceneRef> scenes;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "scene.json")) {
      scenes.push_back({entry.path().filename().string(), entry.path()});
    }
  }
  if (scenes.empty()) throw Error(ErrorCode::kIo, "missing file: " + (root / "scene.json").string());
  std::sort(scenes.begin(), scenes.end(), [](const SceneRef& a, const SceneRef& b) { return a.name < b.name; });
  return scenes;
}

struct RunRow {
  std::string ablation;
  std::string scene;
  std::uint64_t seed = 0;
  bool diverged = false;
  std::string message;
  OptimReport report;
};

std::string epochs_csv(const OptimReport& r) {
  std::ostringstream s;
  s << "epoch,total,cons,cam,selfsup,grad_max,step_scale,halvings,pose_error\n";
  for (const auto& e : r.epochs) {
    s << e.epoch << ',' << csv_number(e.loss.total) << ',' << csv_number(e.loss.cons_value) << ','
      << csv_number(e.loss.cam_value) << ',' << csv_number(e.loss.selfsup_value) << ',' << csv_number(e.grad_max)
      << ',' << csv_number(e.step_scale) << ',' << e.halvings << ',' << csv_number(e.pose_error) << '\n';
  }
  return s.str();
}

Json report_json(const RunRow& row) {
  const OptimReport& r = row.report;
  Json j{{"ablation", row.ablation}, {"scene", row.scene}, {"seed", row.seed}, {"diverged", row.diverged}};
  if (row.diverged) {
    j["message"] = row.message;
    return j;
  }
  Json breakdown = Json::array();
  j["stop"] = to_string(r.stop);
  j["epochs"] = r.epochs.size();
  j["initial_loss"] = number(r.initial_loss);
  j["final_loss"] = number(r.final_loss);
  j["initial"] = metrics_json(r.initial);
  j["final"] = metrics_json(r.final);
  j["delta"] = Json{{"pose_error", number(r.final.pose_error - r.initial.pose_error)},
                    {"ate", number(r.final.ate - r.initial.ate)},
                    {"pointmap_error", number(r.final.pointmap_error - r.initial.pointmap_error)},
                    {"track_error", number(r.final.track_error - r.initial.track_error)}};
  if (!r.epochs.empty()) {
    const auto& last = r.epochs.back().loss;
    j["final_breakdown"] = Json{{"cons", number(last.cons_value)},
                                {"cam", number(last.cam_value)},
                                {"selfsup", number(last.selfsup_value)},
                                {"total", number(last.total)},
                                {"cons_residual_mean", number(last.cons_stats.residual_mean())},
                                {"cam_residual_mean", number(last.cam_stats.residual_mean())},
                                {"selfsup_residual_mean", number(last.selfsup_stats.residual_mean())},
                                {"skipped", last.cons_stats.skipped + last.cam_stats.skipped +
                                                last.selfsup_stats.skipped}};
  }
  return j;
}

}  // namespace

int run_optimize(const OptimizeOptions& options, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    OptimConfig base;
    Json inputs{{"scene_dir", options.scene_dir.generic_string()}};
    if (options.config) {
      base = optim_config_from_json(load_json(*options.config));
      inputs["config_path"] = options.config->generic_string();
    }
    if (options.ablations.empty()) throw Error(ErrorCode::kConfigInvalid, "ablation: none given");
    for (const auto& a : options.ablations) apply_ablation(base.loss, a);  // validates names
    inputs["optim_config"] = to_json(base);
    inputs["ablations"] = options.ablations;

    std::vector<SceneRef> scenes = discover_scenes(options.scene_dir);
    // Read configs up front so seed filtering and IO errors surface early.
    std::vector<std::uint64_t> scene_seeds;
    for (const auto& s : scenes) {
      scene_seeds.push_back(scene_config_from_json(load_json(s.dir / "scene.json").at("config")).seed);
    }
    if (!options.seeds.empty()) {
      std::vector<SceneRef> kept;
      std::vector<std::uint64_t> kept_seeds;
      for (std::size_t k = 0; k < scenes.size(); ++k) {
        if (std::find(options.seeds.begin(), options.seeds.end(), scene_seeds[k]) != options.seeds.end()) {
          kept.push_back(scenes[k]);
          kept_seeds.push_back(scene_seeds[k]);
        }
      }
      scenes = std::move(kept);
      scene_seeds = std::move(kept_seeds);
      if (scenes.empty()) throw Error(ErrorCode::kConfigInvalid, "seeds: no scene matches");
    }

    std::vector<RunRow> rows(options.ablations.size() * scenes.size());
    parallel_for(rows.size(), options.jobs, [&](std::size_t k) {
      const std::size_t a = k / scenes.size();
      const std::size_t s = k % scenes.size();
      RunRow& row = rows[k];
      row.ablation = options.ablations[a];
      row.scene = scenes[s].name;
      row.seed = scene_seeds[s];
      const SyntheticScene scene = read_scene(scenes[s].dir);
      OptimConfig cfg = base;
      cfg.loss = apply_ablation(base.loss, row.ablation);
      const fs::path dir = options.out / row.ablation / row.scene;
      try {
        CouplingState final_state = initial_state(scene);
        row.report = optimize_scene(scene, cfg, &final_state);
        write_text(dir / "epochs.csv", epochs_csv(row.report));
        write_poses(dir / "cameras.txt", final_state.relative_poses());
        TrackSet tracks = scene.estimates.tracks;
        tracks.points = final_state.export_track_points();
        write_tracks(dir / "tracks.txt", tracks);
        write_pointmap_dir(dir / "pointmaps", final_state.export_grids());
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kDiverged) throw;
        row.diverged = true;
        row.message = e.what();
      }
      write_json(dir / "report.json", report_json(row));
    });

    std::ostringstream csv;
    csv << "ablation,scene,seed,status,epochs,initial_pose_error,final_pose_error,initial_ate,final_ate,"
           "initial_pointmap_error,final_pointmap_error,initial_track_error,final_track_error\n";
    Json summary = Json::array();
    int diverged = 0;
    for (const auto& row : rows) {
      const auto& r = row.report;
      diverged += row.diverged;
      csv << row.ablation << ',' << row.scene << ',' << row.seed << ','
          << (row.diverged ? "diverged" : to_string(r.stop)) << ',' << r.epochs.size();
      for (double v : {r.initial.pose_error, r.final.pose_error, r.initial.ate, r.final.ate,
                       r.initial.pointmap_error, r.final.pointmap_error, r.initial.track_error,
                       r.final.track_error}) {
        csv << ',' << (row.diverged ? std::string() : csv_number(v));
      }
      csv << '\n';
      summary.push_back(report_json(row));
    }
    write_text(options.out / "summary.csv", csv.str());
    write_json(options.out / "summary.json", summary);
    std::vector<std::uint64_t> seeds_run(scene_seeds.begin(), scene_seeds.end());
    write_json(options.out / "manifest.json", manifest("optimize", inputs, seeds_run, options.out));

    log << csv.str();
    if (diverged) {
      err << diverged << " run(s) diverged\n";
      return kExitDiverged;
    }
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// eval

namespace {

const std::vector<std::string> kAllMetrics{"ate", "rpe", "relpose", "tapvid", "pointmap", "depth"};

std::vector<Vec3> flatten(const std::vector<PointMapGrid>& grids) {
  std::vector<Vec3> out;
  for (const auto& g : grids) {
    for (int y = 0; y < g.height(); ++y) {
      for (int x = 0; x < g.width(); ++x) out.push_back(g.at(x, y));
    }
  }
  return out;
}

}  // namespace

int run_eval(const EvalOptions& options, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    std::vector<std::string> selected;
    for (const auto& m : options.metrics) {
      if (m == "all") {
        selected = kAllMetrics;
        break;
      }
      if (std::find(kAllMetrics.begin(), kAllMetrics.end(), m) == kAllMetrics.end()) {
        throw Error(ErrorCode::kConfigInvalid, "metrics: unknown metric '" + m + "'");
      }
      if (std::find(selected.begin(), selected.end(), m) == selected.end()) selected.push_back(m);
    }
    auto wants = [&](const char* m) { return std::find(selected.begin(), selected.end(), m) != selected.end(); };

    std::map<std::string, double> values;
    Json meta = Json::object();

    if (wants("ate") || wants("rpe") || wants("relpose")) {
      const auto est = read_poses(options.pred / "cameras.txt");
      const auto gt = read_poses(options.gt / "cameras.txt");
      if (est.size() != gt.size()) {
        throw Error(ErrorCode::kFormat, (options.pred / "cameras.txt").string() + ": " +
                                            std::to_string(est.size()) + " poses, GT has " +
                                            std::to_string(gt.size()));
      }
      if (wants("ate")) {
        values["ate"] = ate(est, gt, true);
        meta["ate"] = Json{{"alignment", "umeyama_with_scale"}};
      }
      if (wants("rpe")) {
        const RpeResult r = rpe(est, gt, options.rpe_step);
        values["rpe_trans"] = r.trans;
        values["rpe_rot_deg"] = r.rot_deg;
        meta["rpe"] = Json{{"step", options.rpe_step}, {"alignment", "none"}};
      }
      if (wants("relpose")) {
        const RelPoseAccuracy r = rel_pose_accuracy(est, gt, 30);
        values["rra_30"] = r.rra;
        values["rta_30"] = r.rta;
        values["auc_30"] = r.auc;
        meta["relpose"] = Json{{"threshold_deg", 30}, {"pairs", r.pairs}, {"skipped_pairs", r.skipped}, {"unit", "percent"}};
      }
    }
    if (wants("tapvid")) {
      const TrackSet est = read_tracks(options.pred / "tracks.txt");
      const TrackSet gt = read_tracks(options.gt / "tracks.txt");
      if (est.n_tracks != gt.n_tracks || est.n_frames != gt.n_frames) {
        throw Error(ErrorCode::kFormat, (options.pred / "tracks.txt").string() + ":1: shape differs from GT");
      }
      TapvidOptions o;
      o.focal = options.focal;
      const TapvidResult r = tapvid3d_metrics(est, gt, o);
      values["aj3d"] = r.aj;
      values["apd3d"] = r.apd;
      values["oa"] = r.oa;
      meta["tapvid"] = Json{{"thresholds_px", o.thresholds}, {"focal", o.focal}, {"unit", "percent"}};
    }
    if (wants("pointmap") || wants("depth")) {
      const auto est = read_pointmap_dir(options.pred / "pointmaps");
      const auto gt = read_pointmap_dir(options.gt / "pointmaps");
      if (est.size() != gt.size() || est[0].width() != gt[0].width() || est[0].height() != gt[0].height()) {
        throw Error(ErrorCode::kFormat, (options.pred / "pointmaps").string() + ": shape differs from GT");
      }
      if (wants("pointmap")) {
        PointmapMetricOptions o;
        o.use_icp = options.icp;
        const auto a = flatten(est);
        const auto b = flatten(gt);
        const PointmapMetrics m = pointmap_metrics(a, b, o);
        values["acc_mean"] = m.acc_mean;
        values["acc_median"] = m.acc_median;
        values["comp_mean"] = m.comp_mean;
        values["comp_median"] = m.comp_median;
        values["nc_mean"] = m.nc_mean;
        values["nc_median"] = m.nc_median;
        meta["pointmap"] = Json{{"alignment", "umeyama_with_scale"}, {"icp", options.icp}, {"normal_neighbors", 16}};
      }
      if (wants("depth")) {
        std::vector<std::vector<double>> pd, gd;
        for (std::size_t t = 0; t < est.size(); ++t) {
          pd.push_back(depth_from_pointmap(est[t]));
          gd.push_back(depth_from_pointmap(gt[t]));
        }
        const std::vector<std::vector<std::uint8_t>> all_valid;
        struct Mode {
          const char* name;
          DepthOptions o;
        };
        const Mode modes[] = {
            {"depth_scale_seq", {DepthAlignment::kScale, DepthGrouping::kPerSequence, false}},
            {"depth_shift_seq", {DepthAlignment::kScaleShift, DepthGrouping::kPerSequence, false}},
            {"depth_scale_img", {DepthAlignment::kScale, DepthGrouping::kPerImage, false}},
        };
        for (const auto& mode : modes) {
          const DepthMetrics d = depth_metrics(pd, gd, all_valid, mode.o);
          values[std::string(mode.name) + "_abs_rel"] = d.abs_rel;
          values[std::string(mode.name) + "_delta1"] = d.delta1;
        }
        meta["depth"] = Json{{"source", "pointmap z"}, {"delta_unit", "fraction"}, {"scale", "median ratio"}};
      }
    }

    Json doc{{"pred", options.pred.generic_string()}, {"gt", options.gt.generic_string()}};
    Json vals = Json::object();
    std::ostringstream csv;
    csv << "metric,value\n";
    for (const auto& [k, v] : values) {
      vals[k] = number(v);
      csv << k << ',' << csv_number(v) << '\n';
    }
    doc["metrics"] = vals;
    doc["metadata"] = meta;
    write_json(options.out / "metrics.json", doc);
    write_text(options.out / "metrics.csv", csv.str());
    log << csv.str();
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// gradcheck

int run_gradcheck_cli(const GradcheckCliOptions& options, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    if (!(options.h > 0.0)) throw Error(ErrorCode::kConfigInvalid, "h: must be positive");
    if (!(options.tol > 0.0)) throw Error(ErrorCode::kConfigInvalid, "tol: must be positive");
    for (const auto& f : options.fixtures) {
      const auto& kinds = gradcheck_fixture_kinds();
      if (std::find(kinds.begin(), kinds.end(), f) == kinds.end()) {
        throw Error(ErrorCode::kConfigInvalid, "fixtures: unknown fixture '" + f + "'");
      }
    }
    GradcheckOptions go;
    go.h = options.h;
    go.tol = options.tol;
    go.corruption = options.corruption;

    std::ostringstream table;
    table << "fixture,term,block,routed,samples,max_rel_error,max_abs_error,status\n";
    int failures = 0;
    for (const auto& kind : options.fixtures) {
      for (std::uint64_t seed : options.seeds) {
        std::vector<GradcheckRow> rows;
        try {
          GradcheckFixture f = make_gradcheck_fixture(kind, seed);
          rows = run_gradcheck(f, go);
        } catch (const Error& e) {
          // Reported per fixture; the sweep continues.
          ++failures;
          table << kind << '#' << seed << ",,,,0,,,error: " << e.what() << '\n';
          continue;
        }
        for (const auto& r : rows) {
          failures += !r.pass;
          table << r.fixture << ',' << r.term << ',' << r.block << ',' << (r.routed ? "routed" : "zero") << ','
                << r.samples << ',' << format_double(r.max_rel_error) << ',' << format_double(r.max_abs_error)
                << ',' << (r.pass ? "pass" : "FAIL") << '\n';
        }
      }
    }
    if (options.out) write_text(*options.out / "gradcheck.csv", table.str());
    log << table.str();
    if (failures) {
      err << failures << " gradient check(s) failed at tol " << options.tol << '\n';
      return kExitGradcheck;
    }
    return kExitOk;
  });
}

}  // namespace trackcouple
