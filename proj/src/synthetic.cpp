#include "trackcouple/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include "trackcouple/config.hpp"
#include "trackcouple/error.hpp"
#include "trackcouple/formats.hpp"

namespace trackcouple {

namespace {

[[noreturn]] void invalid(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::kConfigInvalid, field + ": " + why);
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

// Camera at `eye` looking at `target`; columns are (right, down, forward) in
// world coordinates, so points in front of the camera have positive z.
Pose look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(Vec3(0.0, 1.0, 0.0));
  if (right.norm() < 1e-9) right = forward.cross(Vec3(1.0, 0.0, 0.0));
  right.normalize();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return Pose(r, eye);
}

struct Lattice {
  int nx = 0;
  int ny = 0;
  std::vector<double> nodes;  // world xyz, row-major like a pointmap

  GridView view() const { return GridView{nx, ny, nodes}; }
  Vec3 node(int a, int b) const { return view().at(a, b); }
  Vec3 point(double sa, double sb) const { return sample(view(), PixelLocation{sa, sb}); }
};

// Cell size in scene units before normalization: a window spans 0.7 units.
double cell_size(const SceneConfig& c) { return 0.7 / static_cast<double>(std::max(c.width, c.height) - 1); }

std::vector<Vec3> camera_centers(const SceneConfig& c, const Vec3& center, std::mt19937_64& rng) {
  const int T = c.n_frames;
  const double m = c.camera_magnitude;
  std::vector<Vec3> eyes(T);
  const double denom = std::max(1, T - 1);
  switch (c.camera_path) {
    case CameraPath::kOrbit: {
      std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
      const double phi0 = phase(rng);
      for (int t = 0; t < T; ++t) {
        const double phi = phi0 + 0.5 * std::numbers::pi * t / denom;
        eyes[t] = center + Vec3(m * std::cos(phi), m * std::sin(phi), 1.0);
      }
      break;
    }
    case CameraPath::kLine: {
      std::uniform_real_distribution<double> heading(0.0, 2.0 * std::numbers::pi);
      const double h = heading(rng);
      const Vec3 dir(std::cos(h), std::sin(h), 0.0);
      for (int t = 0; t < T; ++t) {
        const double s = t / denom;
        // The shallow vertical arc keeps camera centers from being collinear.
        eyes[t] = center + m * (s - 0.5) * dir +
                  Vec3(0.0, 0.0, 1.0 + 0.25 * m * std::sin(std::numbers::pi * s));
      }
      break;
    }
    case CameraPath::kRandomWalk: {
      std::normal_distribution<double> step(0.0, m / std::sqrt(static_cast<double>(T)));
      Vec3 p = center + Vec3(0.0, 0.0, 1.0);
      for (int t = 0; t < T; ++t) {
        eyes[t] = p;
        p += Vec3(step(rng), step(rng), 0.25 * step(rng));
      }
      break;
    }
  }
  return eyes;
}

}  // namespace

void SceneConfig::validate() const {
  if (n_frames < 2) invalid("n_frames", "must be at least 2");
  if (n_static < 1) invalid("n_static", "must be at least 1");
  if (n_dynamic < 0) invalid("n_dynamic", "must be non-negative");
  if (width < 4) invalid("width", "must be at least 4");
  if (height < 4) invalid("height", "must be at least 4");
  if (!(camera_magnitude >= 0.0) || !std::isfinite(camera_magnitude)) invalid("camera_magnitude", "must be >= 0");
  if (!(motion_speed >= 0.0) || !std::isfinite(motion_speed)) invalid("motion_speed", "must be >= 0");
  if (!(sigma_pointmap >= 0.0)) invalid("sigma_pointmap", "must be >= 0");
  if (!(sigma_track >= 0.0)) invalid("sigma_track", "must be >= 0");
  if (!(sigma_pose >= 0.0)) invalid("sigma_pose", "must be >= 0");
  if (anchor < 0 || anchor >= n_frames) invalid("anchor", "must lie in [0, n_frames)");
  if (occlusion_every < 0) invalid("occlusion_every", "must be >= 0");
  if (occlusion_length < 0) invalid("occlusion_length", "must be >= 0");
}

std::vector<Pose> SyntheticScene::gt_relative_poses() const {
  std::vector<Pose> out;
  for (const Pose& c : gt_cameras) out.push_back(relative_pose(c, gt_cameras[config.anchor]));
  return out;
}

std::vector<Pose> SyntheticScene::estimated_relative_poses() const {
  std::vector<Pose> out;
  const Pose& cx = estimates.cameras[config.anchor];
  for (const Pose& c : estimates.cameras) out.push_back(relative_pose(c, cx));
  return out;
}

std::vector<Vec3> SyntheticScene::gt_anchor_targets() const {
  return anchor_targets(gt_world, gt_cameras[config.anchor]);
}

SyntheticScene generate(const SceneConfig& config) {
  config.validate();
  const int T = config.n_frames;
  const int W = config.width;
  const int H = config.height;
  const int N = config.n_static + config.n_dynamic;
  const double cell = cell_size(config);
  auto rng = make_rng(config.seed, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Cameras circle above the window of frame 0's lattice center.
  const Vec3 center(0.5 * (W - 1) * cell, 0.5 * (H - 1) * cell, 0.0);
  const std::vector<Vec3> eyes = camera_centers(config, center, rng);

  // Window origins follow the camera in whole lattice cells.
  std::vector<int> ox(T), oy(T);
  for (int t = 0; t < T; ++t) {
    ox[t] = static_cast<int>(std::lround((eyes[t].x() - eyes[0].x()) / cell));
    oy[t] = static_cast<int>(std::lround((eyes[t].y() - eyes[0].y()) / cell));
  }
  const int min_x = *std::min_element(ox.begin(), ox.end());
  const int min_y = *std::min_element(oy.begin(), oy.end());
  for (int t = 0; t < T; ++t) {
    ox[t] -= min_x;
    oy[t] -= min_y;
  }
  const int span_x = *std::max_element(ox.begin(), ox.end());
  const int span_y = *std::max_element(oy.begin(), oy.end());
  // Intersection of all windows, in lattice coordinates.
  const double margin = 0.25;
  const double lo_x = span_x + margin, hi_x = W - 1 - margin;
  const double lo_y = span_y + margin, hi_y = H - 1 - margin;
  if (hi_x - lo_x < 1.0 || hi_y - lo_y < 1.0) {
    invalid("camera_magnitude", "camera motion leaves no region visible in every frame");
  }

  // Height field: a few low-frequency sinusoids with random phase/direction.
  Lattice lat;
  lat.nx = W + span_x;
  lat.ny = H + span_y;
  lat.nodes.resize(3 * static_cast<std::size_t>(lat.nx) * lat.ny);
  struct Wave {
    double amp, kx, ky, phase;
  };
  std::vector<Wave> waves;
  for (int k = 0; k < 4; ++k) {
    const double dir = 2.0 * std::numbers::pi * unit(rng);
    const double wavelength = 0.35 + 0.5 * unit(rng);
    const double kmag = 2.0 * std::numbers::pi / wavelength;
    waves.push_back({0.03 / (k + 1), kmag * std::cos(dir), kmag * std::sin(dir),
                     2.0 * std::numbers::pi * unit(rng)});
  }
  const double shift_x = min_x * cell + 0.0;  // lattice node (0,0) sits at the lowest window origin
  const double shift_y = min_y * cell;
  for (int b = 0; b < lat.ny; ++b) {
    for (int a = 0; a < lat.nx; ++a) {
      const double x = a * cell + shift_x;
      const double y = b * cell + shift_y;
      double z = 0.0;
      for (const Wave& w : waves) z += w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
      const std::size_t k = 3 * (static_cast<std::size_t>(b) * lat.nx + a);
      lat.nodes[k] = x;
      lat.nodes[k + 1] = y;
      lat.nodes[k + 2] = z;
    }
  }

  // Normalize to a unit bounding-box diagonal over the lattice.
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (int b = 0; b < lat.ny; ++b) {
    for (int a = 0; a < lat.nx; ++a) {
      lo = lo.cwiseMin(lat.node(a, b));
      hi = hi.cwiseMax(lat.node(a, b));
    }
  }
  const double diag = (hi - lo).norm();
  for (double& v : lat.nodes) v /= diag;
  const Vec3 look_target = center / diag;

  SyntheticScene scene;
  scene.config = config;
  scene.scene_diagonal = 1.0;
  for (int t = 0; t < T; ++t) scene.gt_cameras.push_back(look_at(eyes[t] / diag, look_target));

  // Track lattice coordinates s_{t,i}.
  std::vector<double> sx(static_cast<std::size_t>(N) * T), sy(sx.size());
  auto fits = [&](double x, double y, int t) {
    const double qx = x - ox[t], qy = y - oy[t];
    return qx >= margin && qx <= W - 1 - margin && qy >= margin && qy <= H - 1 - margin;
  };
  for (int i = 0; i < config.n_static; ++i) {
    const double x = lo_x + (hi_x - lo_x) * unit(rng);
    const double y = lo_y + (hi_y - lo_y) * unit(rng);
    for (int t = 0; t < T; ++t) {
      sx[static_cast<std::size_t>(i) * T + t] = x;
      sy[static_cast<std::size_t>(i) * T + t] = y;
    }
  }
  const double speed_cells = config.motion_speed / cell;
  for (int j = 0; j < config.n_dynamic; ++j) {
    const int i = config.n_static + j;
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const double heading = 2.0 * std::numbers::pi * unit(rng);
      const double dx = std::cos(heading), dy = std::sin(heading);
      const double x0 = (W - 1) * unit(rng) + ox[0];
      const double y0 = (H - 1) * unit(rng) + oy[0];
      placed = true;
      for (int t = 0; t < T && placed; ++t) {
        double d = 0.0;
        if (config.motion == MotionKind::kLinear) {
          d = speed_cells * t;
        } else {
          const double omega = 2.0 * std::numbers::pi / T;
          d = (speed_cells / omega) * std::sin(omega * t);
        }
        const double x = x0 + d * dx, y = y0 + d * dy;
        placed = fits(x, y, t);
        sx[static_cast<std::size_t>(i) * T + t] = x;
        sy[static_cast<std::size_t>(i) * T + t] = y;
      }
    }
    if (!placed) invalid("motion_speed", "dynamic trajectories do not fit inside the frame windows");
  }

  // Visibility: occlusion windows that avoid frame 0 and the anchor.
  std::vector<double> vis(static_cast<std::size_t>(N) * T, 1.0);
  if (config.occlusion_every > 0 && config.occlusion_length > 0) {
    std::vector<int> starts;
    for (int s = 0; s + config.occlusion_length <= T; ++s) {
      const int e = s + config.occlusion_length;
      if (s <= 0 && 0 < e) continue;
      if (s <= config.anchor && config.anchor < e) continue;
      starts.push_back(s);
    }
    if (!starts.empty()) {
      for (int i = config.occlusion_every - 1; i < N; i += config.occlusion_every) {
        const int s = starts[static_cast<std::size_t>(unit(rng) * starts.size()) % starts.size()];
        for (int t = s; t < s + config.occlusion_length; ++t) vis[static_cast<std::size_t>(i) * T + t] = 0.0;
      }
    }
  }

  scene.gt_world.n_tracks = N;
  scene.gt_world.n_frames = T;
  scene.gt_world.points.resize(sx.size());
  scene.gt_world.visibility = vis;
  scene.gt_tracks = TrackSet::zeros(N, T);
  scene.pseudo_tracks = TrackSet::zeros(N, T);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int i = 0; i < N; ++i) {
    for (int t = 0; t < T; ++t) {
      const std::size_t k = static_cast<std::size_t>(i) * T + t;
      const Vec3 X = lat.point(sx[k], sy[k]);
      scene.gt_world.points[k] = X;
      const PixelLocation q{sx[k] - ox[t], sy[k] - oy[t]};
      scene.gt_tracks.points[k] = camera_frame_position(X, scene.gt_cameras[t]);
      scene.gt_tracks.visibility[k] = vis[k];
      scene.gt_tracks.query_pixels[k] = q;
      scene.pseudo_tracks.points[k] = Vec3(nan, nan, nan);
      scene.pseudo_tracks.visibility[k] = vis[k];
      scene.pseudo_tracks.query_pixels[k] = q;
    }
  }
  scene.gt_tracks.static_mask = static_mask(scene.gt_world, config.anchor, scene.default_tau(),
                                            scene.gt_cameras[config.anchor]);
  scene.pseudo_tracks.static_mask.assign(scene.pseudo_tracks.size(), 1);

  for (int t = 0; t < T; ++t) {
    PointMapGrid g(W, H, t);
    const Pose world_to_cam = scene.gt_cameras[t].inverse();
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) g.set(x, y, world_to_cam * lat.node(x + ox[t], y + oy[t]));
    }
    scene.gt_grids.push_back(std::move(g));
  }

  scene.estimates = perturb(scene, config.sigma_pointmap, config.sigma_track, config.sigma_pose, config.seed);
  return scene;
}

Estimates perturb(const SyntheticScene& scene, double sigma_p, double sigma_t, double sigma_c,
                  std::uint64_t seed) {
  if (!(sigma_p >= 0.0) || !(sigma_t >= 0.0) || !(sigma_c >= 0.0)) {
    throw Error(ErrorCode::kConfigInvalid, "noise levels must be non-negative");
  }
  // Separate streams so changing one sigma leaves the other draws untouched.
  auto rng_p = make_rng(seed, 1);
  auto rng_t = make_rng(seed, 2);
  auto rng_c = make_rng(seed, 3);
  std::normal_distribution<double> std_normal(0.0, 1.0);

  Estimates est;
  est.grids = scene.gt_grids;
  for (auto& g : est.grids) {
    for (double& v : g.values()) {
      const double n = std_normal(rng_p);
      if (sigma_p > 0.0) v += sigma_p * n;
    }
  }
  est.tracks = scene.gt_tracks;
  for (Vec3& p : est.tracks.points) {
    Vec3 n(std_normal(rng_t), std_normal(rng_t), std_normal(rng_t));
    if (sigma_t > 0.0) p += sigma_t * n;
  }
  const double per_axis = sigma_c / std::sqrt(6.0);
  for (const Pose& c : scene.gt_cameras) {
    Vec6 xi;
    for (int k = 0; k < 6; ++k) xi(k) = std_normal(rng_c);
    est.cameras.push_back(sigma_c > 0.0 ? perturb_left(c, PoseTangent::from_stacked(per_axis * xi)) : c);
  }
  return est;
}

Observations supervised_observations(const SyntheticScene& scene, double tau) {
  Observations obs;
  obs.n_tracks = scene.gt_tracks.n_tracks;
  obs.n_frames = scene.gt_tracks.n_frames;
  obs.anchor = scene.anchor();
  obs.pixels = scene.gt_tracks.query_pixels;
  obs.weights = scene.gt_tracks.visibility;
  obs.static_mask = static_mask(scene.gt_world, scene.anchor(), tau, scene.gt_cameras[scene.anchor()]);
  obs.targets = scene.gt_anchor_targets();
  return obs;
}

Observations pseudo_observations(const SyntheticScene& scene) {
  Observations obs;
  obs.n_tracks = scene.pseudo_tracks.n_tracks;
  obs.n_frames = scene.pseudo_tracks.n_frames;
  obs.anchor = scene.anchor();
  obs.pixels = scene.pseudo_tracks.query_pixels;
  obs.weights = scene.pseudo_tracks.visibility;
  obs.static_mask.assign(obs.pixels.size(), 1);
  return obs;
}

CouplingState initial_state(const SyntheticScene& scene) {
  const auto rel = scene.estimated_relative_poses();
  return CouplingState(scene.estimates.grids, scene.estimates.tracks, rel);
}

void write_scene(const std::filesystem::path& dir, const SyntheticScene& scene) {
  std::filesystem::create_directories(dir);
  nlohmann::json doc;
  doc["config"] = to_json(scene.config);
  doc["scene_diagonal"] = scene.scene_diagonal;
  {
    std::ofstream out(dir / "scene.json");
    if (!out) throw Error(ErrorCode::kIo, "cannot open for writing: " + (dir / "scene.json").string());
    out << doc.dump(2) << '\n';
  }
  const int N = scene.gt_tracks.n_tracks;
  const int T = scene.gt_tracks.n_frames;
  write_poses(dir / "gt" / "cameras.txt", scene.gt_cameras);
  write_world_tracks(dir / "gt" / "world_tracks.txt", scene.gt_world);
  write_tracks(dir / "gt" / "tracks.txt", scene.gt_tracks);
  write_static_mask(dir / "gt" / "static_mask.txt", N, T, scene.gt_tracks.static_mask);
  write_pointmap_dir(dir / "gt" / "pointmaps", scene.gt_grids);
  write_poses(dir / "est" / "cameras.txt", scene.estimates.cameras);
  write_tracks(dir / "est" / "tracks.txt", scene.estimates.tracks);
  write_pointmap_dir(dir / "est" / "pointmaps", scene.estimates.grids);
  write_tracks(dir / "pseudo_tracks.txt", scene.pseudo_tracks);
}

SyntheticScene read_scene(const std::filesystem::path& dir) {
  const auto meta_path = dir / "scene.json";
  if (!std::filesystem::exists(meta_path)) throw Error(ErrorCode::kIo, "missing file: " + meta_path.string());
  nlohmann::json doc;
  try {
    std::ifstream in(meta_path);
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, meta_path.string() + ": " + e.what());
  }
  SyntheticScene scene;
  if (!doc.contains("config")) throw Error(ErrorCode::kFormat, meta_path.string() + ": missing 'config'");
  scene.config = scene_config_from_json(doc["config"]);
  scene.scene_diagonal = doc.value("scene_diagonal", 1.0);
  scene.gt_cameras = read_poses(dir / "gt" / "cameras.txt");
  scene.gt_world = read_world_tracks(dir / "gt" / "world_tracks.txt");
  scene.gt_tracks = read_tracks(dir / "gt" / "tracks.txt");
  int n = 0, t = 0;
  scene.gt_tracks.static_mask = read_static_mask(dir / "gt" / "static_mask.txt", n, t);
  scene.gt_grids = read_pointmap_dir(dir / "gt" / "pointmaps");
  scene.estimates.cameras = read_poses(dir / "est" / "cameras.txt");
  scene.estimates.tracks = read_tracks(dir / "est" / "tracks.txt");
  scene.estimates.tracks.static_mask = scene.gt_tracks.static_mask;
  scene.estimates.grids = read_pointmap_dir(dir / "est" / "pointmaps");
  scene.pseudo_tracks = read_tracks(dir / "pseudo_tracks.txt");

  const int N = scene.gt_tracks.n_tracks;
  const int T = scene.gt_tracks.n_frames;
  auto mismatch = [&](const std::string& what) {
    throw Error(ErrorCode::kFormat, dir.string() + ": " + what + " does not match the GT track shape");
  };
  if (n != N || t != T) mismatch("gt/static_mask.txt");
  if (scene.gt_world.n_tracks != N || scene.gt_world.n_frames != T) mismatch("gt/world_tracks.txt");
  if (scene.estimates.tracks.n_tracks != N || scene.estimates.tracks.n_frames != T) mismatch("est/tracks.txt");
  if (scene.pseudo_tracks.n_tracks != N || scene.pseudo_tracks.n_frames != T) mismatch("pseudo_tracks.txt");
  if (static_cast<int>(scene.gt_cameras.size()) != T) mismatch("gt/cameras.txt");
  if (static_cast<int>(scene.estimates.cameras.size()) != T) mismatch("est/cameras.txt");
  if (static_cast<int>(scene.gt_grids.size()) != T) mismatch("gt/pointmaps");
  if (static_cast<int>(scene.estimates.grids.size()) != T) mismatch("est/pointmaps");
  scene.pseudo_tracks.static_mask.assign(scene.pseudo_tracks.size(), 1);
  if (scene.config.anchor >= T) throw Error(ErrorCode::kConfigInvalid, "anchor: outside the scene's frames");
  return scene;
}

}  // namespace trackcouple
