#include "trackcouple/config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "trackcouple/error.hpp"

namespace trackcouple {

namespace {

using Json = nlohmann::json;

[[noreturn]] void invalid(const std::string& key, const std::string& why) {
  throw Error(ErrorCode::kConfigInvalid, key + ": " + why);
}

void read_int(const Json& v, const std::string& key, int& out) {
  if (!v.is_number_integer()) invalid(key, "expected an integer");
  const auto x = v.get<long long>();
  if (x < -2147483647LL || x > 2147483647LL) invalid(key, "integer out of range");
  out = static_cast<int>(x);
}

void read_double(const Json& v, const std::string& key, double& out) {
  if (!v.is_number()) invalid(key, "expected a number");
  out = v.get<double>();
}

void read_bool(const Json& v, const std::string& key, bool& out) {
  if (!v.is_boolean()) invalid(key, "expected true or false");
  out = v.get<bool>();
}

using Handler = std::function<void(const Json&)>;

void dispatch(const Json& doc, const std::string& what, const std::map<std::string, Handler>& handlers) {
  if (!doc.is_object()) invalid(what, "expected a JSON object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const auto h = handlers.find(it.key());
    if (h == handlers.end()) invalid(it.key(), "unknown key in " + what);
    h->second(it.value());
  }
}

std::string path_name(CameraPath p) {
  switch (p) {
    case CameraPath::kOrbit: return "orbit";
    case CameraPath::kLine: return "line";
    case CameraPath::kRandomWalk: return "random-walk";
  }
  return "orbit";
}

std::string motion_name(MotionKind m) { return m == MotionKind::kLinear ? "linear" : "sinusoidal"; }

}  // namespace

SceneConfig scene_config_from_json(const Json& doc) {
  SceneConfig c;
  dispatch(doc, "scene config",
           {
               {"n_frames", [&](const Json& v) { read_int(v, "n_frames", c.n_frames); }},
               {"n_static", [&](const Json& v) { read_int(v, "n_static", c.n_static); }},
               {"n_dynamic", [&](const Json& v) { read_int(v, "n_dynamic", c.n_dynamic); }},
               {"width", [&](const Json& v) { read_int(v, "width", c.width); }},
               {"height", [&](const Json& v) { read_int(v, "height", c.height); }},
               {"camera_path",
                [&](const Json& v) {
                  if (!v.is_string()) invalid("camera_path", "expected a string");
                  const auto s = v.get<std::string>();
                  if (s == "orbit") c.camera_path = CameraPath::kOrbit;
                  else if (s == "line") c.camera_path = CameraPath::kLine;
                  else if (s == "random-walk") c.camera_path = CameraPath::kRandomWalk;
                  else invalid("camera_path", "expected orbit, line or random-walk");
                }},
               {"camera_magnitude", [&](const Json& v) { read_double(v, "camera_magnitude", c.camera_magnitude); }},
               {"motion",
                [&](const Json& v) {
                  if (!v.is_string()) invalid("motion", "expected a string");
                  const auto s = v.get<std::string>();
                  if (s == "linear") c.motion = MotionKind::kLinear;
                  else if (s == "sinusoidal") c.motion = MotionKind::kSinusoidal;
                  else invalid("motion", "expected linear or sinusoidal");
                }},
               {"motion_speed", [&](const Json& v) { read_double(v, "motion_speed", c.motion_speed); }},
               {"sigma_pointmap", [&](const Json& v) { read_double(v, "sigma_pointmap", c.sigma_pointmap); }},
               {"sigma_track", [&](const Json& v) { read_double(v, "sigma_track", c.sigma_track); }},
               {"sigma_pose", [&](const Json& v) { read_double(v, "sigma_pose", c.sigma_pose); }},
               {"anchor", [&](const Json& v) { read_int(v, "anchor", c.anchor); }},
               {"occlusion_every", [&](const Json& v) { read_int(v, "occlusion_every", c.occlusion_every); }},
               {"occlusion_length", [&](const Json& v) { read_int(v, "occlusion_length", c.occlusion_length); }},
               {"seed",
                [&](const Json& v) {
                  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
                    invalid("seed", "expected a non-negative integer");
                  }
                  c.seed = v.get<std::uint64_t>();
                }},
           });
  c.validate();
  return c;
}

Json to_json(const SceneConfig& c) {
  return Json{{"n_frames", c.n_frames},
              {"n_static", c.n_static},
              {"n_dynamic", c.n_dynamic},
              {"width", c.width},
              {"height", c.height},
              {"camera_path", path_name(c.camera_path)},
              {"camera_magnitude", c.camera_magnitude},
              {"motion", motion_name(c.motion)},
              {"motion_speed", c.motion_speed},
              {"sigma_pointmap", c.sigma_pointmap},
              {"sigma_track", c.sigma_track},
              {"sigma_pose", c.sigma_pose},
              {"anchor", c.anchor},
              {"occlusion_every", c.occlusion_every},
              {"occlusion_length", c.occlusion_length},
              {"seed", c.seed}};
}

LossConfig loss_config_from_json(const Json& doc) {
  LossConfig c;
  dispatch(doc, "loss config",
           {
               {"enable_cons", [&](const Json& v) { read_bool(v, "enable_cons", c.enable_cons); }},
               {"enable_cam", [&](const Json& v) { read_bool(v, "enable_cam", c.enable_cam); }},
               {"enable_selfsup", [&](const Json& v) { read_bool(v, "enable_selfsup", c.enable_selfsup); }},
               {"weight_cons", [&](const Json& v) { read_double(v, "weight_cons", c.weight_cons); }},
               {"weight_cam", [&](const Json& v) { read_double(v, "weight_cam", c.weight_cam); }},
               {"weight_selfsup", [&](const Json& v) { read_double(v, "weight_selfsup", c.weight_selfsup); }},
               {"huber_delta", [&](const Json& v) { read_double(v, "huber_delta", c.huber_delta); }},
               {"tau_static",
                [&](const Json& v) {
                  if (v.is_null()) {
                    c.tau_static.reset();
                    return;
                  }
                  double t = 0.0;
                  read_double(v, "tau_static", t);
                  c.tau_static = t;
                }},
               {"tau_static_fraction",
                [&](const Json& v) { read_double(v, "tau_static_fraction", c.tau_static_fraction); }},
               {"cam_target",
                [&](const Json& v) {
                  if (!v.is_string()) invalid("cam_target", "expected a string");
                  const auto s = v.get<std::string>();
                  if (s == "ground_truth") c.cam_target = CamTarget::kGroundTruth;
                  else if (s == "anchor_sample") c.cam_target = CamTarget::kAnchorSample;
                  else invalid("cam_target", "expected ground_truth or anchor_sample");
                }},
               {"static_gating", [&](const Json& v) { read_bool(v, "static_gating", c.static_gating); }},
               {"min_weight", [&](const Json& v) { read_double(v, "min_weight", c.min_weight); }},
           });
  if (!(c.huber_delta > 0.0)) invalid("huber_delta", "must be positive");
  if (c.tau_static && !(*c.tau_static > 0.0)) invalid("tau_static", "must be positive");
  if (!(c.tau_static_fraction > 0.0)) invalid("tau_static_fraction", "must be positive");
  if (c.weight_cons < 0.0) invalid("weight_cons", "must be >= 0");
  if (c.weight_cam < 0.0) invalid("weight_cam", "must be >= 0");
  if (c.weight_selfsup < 0.0) invalid("weight_selfsup", "must be >= 0");
  return c;
}

Json to_json(const LossConfig& c) {
  Json j{{"enable_cons", c.enable_cons},
         {"enable_cam", c.enable_cam},
         {"enable_selfsup", c.enable_selfsup},
         {"weight_cons", c.weight_cons},
         {"weight_cam", c.weight_cam},
         {"weight_selfsup", c.weight_selfsup},
         {"huber_delta", c.huber_delta},
         {"tau_static_fraction", c.tau_static_fraction},
         {"cam_target", c.cam_target == CamTarget::kGroundTruth ? "ground_truth" : "anchor_sample"},
         {"static_gating", c.static_gating},
         {"min_weight", c.min_weight}};
  j["tau_static"] = c.tau_static ? Json(*c.tau_static) : Json(nullptr);
  return j;
}

OptimConfig optim_config_from_json(const Json& doc) {
  OptimConfig c;
  dispatch(doc, "optimizer config",
           {
               {"loss", [&](const Json& v) { c.loss = loss_config_from_json(v); }},
               {"step_grids", [&](const Json& v) { read_double(v, "step_grids", c.step_grids); }},
               {"step_tracks", [&](const Json& v) { read_double(v, "step_tracks", c.step_tracks); }},
               {"step_poses", [&](const Json& v) { read_double(v, "step_poses", c.step_poses); }},
               {"max_epochs", [&](const Json& v) { read_int(v, "max_epochs", c.max_epochs); }},
               {"convergence_tol", [&](const Json& v) { read_double(v, "convergence_tol", c.convergence_tol); }},
               {"convergence_window",
                [&](const Json& v) { read_int(v, "convergence_window", c.convergence_window); }},
               {"gradient_tol", [&](const Json& v) { read_double(v, "gradient_tol", c.gradient_tol); }},
               {"loss_floor", [&](const Json& v) { read_double(v, "loss_floor", c.loss_floor); }},
               {"clip_norm", [&](const Json& v) { read_double(v, "clip_norm", c.clip_norm); }},
               {"max_halvings", [&](const Json& v) { read_int(v, "max_halvings", c.max_halvings); }},
               {"divergence_factor",
                [&](const Json& v) { read_double(v, "divergence_factor", c.divergence_factor); }},
               {"freeze_anchor", [&](const Json& v) { read_bool(v, "freeze_anchor", c.freeze_anchor); }},
               {"update_grids", [&](const Json& v) { read_bool(v, "update_grids", c.update_grids); }},
               {"update_tracks", [&](const Json& v) { read_bool(v, "update_tracks", c.update_tracks); }},
               {"update_poses", [&](const Json& v) { read_bool(v, "update_poses", c.update_poses); }},
               {"refresh_selfsup_mask",
                [&](const Json& v) { read_bool(v, "refresh_selfsup_mask", c.refresh_selfsup_mask); }},
           });
  c.validate();
  return c;
}

Json to_json(const OptimConfig& c) {
  return Json{{"loss", to_json(c.loss)},
              {"step_grids", c.step_grids},
              {"step_tracks", c.step_tracks},
              {"step_poses", c.step_poses},
              {"max_epochs", c.max_epochs},
              {"convergence_tol", c.convergence_tol},
              {"convergence_window", c.convergence_window},
              {"gradient_tol", c.gradient_tol},
              {"loss_floor", c.loss_floor},
              {"clip_norm", c.clip_norm},
              {"max_halvings", c.max_halvings},
              {"divergence_factor", c.divergence_factor},
              {"freeze_anchor", c.freeze_anchor},
              {"update_grids", c.update_grids},
              {"update_tracks", c.update_tracks},
              {"update_poses", c.update_poses},
              {"refresh_selfsup_mask", c.refresh_selfsup_mask}};
}

Json load_json(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::kIo, "missing file: " + path.string());
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open for reading: " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kConfigInvalid, path.string() + ": " + e.what());
  }
}

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names{"none", "cons", "cam", "full", "selfsup", "all"};
  return names;
}

LossConfig apply_ablation(LossConfig base, const std::string& name) {
  bool cons = false, cam = false, selfsup = false;
  if (name == "none" || name == "branch-only") {
  } else if (name == "cons") {
    cons = true;
  } else if (name == "cam") {
    cam = true;
  } else if (name == "full" || name == "cons+cam") {
    cons = cam = true;
  } else if (name == "selfsup") {
    selfsup = true;
  } else if (name == "all") {
    cons = cam = selfsup = true;
  } else {
    invalid("ablation", "unknown name '" + name + "'");
  }
  base.enable_cons = cons;
  base.enable_cam = cam;
  base.enable_selfsup = selfsup;
  return base;
}

}  // namespace trackcouple
