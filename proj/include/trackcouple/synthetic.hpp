#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "trackcouple/coupling.hpp"
#include "trackcouple/pointmap.hpp"
#include "trackcouple/pose.hpp"
#include "trackcouple/tracks.hpp"

namespace trackcouple {

enum class CameraPath { kOrbit, kLine, kRandomWalk };
enum class MotionKind { kLinear, kSinusoidal };

// Lengths (magnitude, speed, sigmas) are in scene units; the generated scene
// is rescaled to a unit bounding-box diagonal, which shrinks them by the same
// factor (typically 10-15%).
struct SceneConfig {
  int n_frames = 8;
  int n_static = 48;
  int n_dynamic = 16;
  int width = 32;
  int height = 32;
  CameraPath camera_path = CameraPath::kOrbit;
  double camera_magnitude = 0.1;
  MotionKind motion = MotionKind::kLinear;
  double motion_speed = 0.01;  // per frame; peak speed for sinusoidal motion
  double sigma_pointmap = 0.005;
  double sigma_track = 0.005;
  double sigma_pose = 0.02;
  int anchor = 0;
  int occlusion_every = 4;   // every k-th track gets an occlusion window; 0 disables
  int occlusion_length = 2;  // frames
  std::uint64_t seed = 0;

  // Throws kConfigInvalid naming the offending field.
  void validate() const;
};

// Noisy "predictions" the optimizer starts from.
struct Estimates {
  std::vector<PointMapGrid> grids;
  TrackSet tracks;
  std::vector<Pose> cameras;  // camera-to-world
};

struct SyntheticScene {
  SceneConfig config;
  double scene_diagonal = 1.0;
  WorldTrackSet gt_world;            // X*_{t,i}
  std::vector<Pose> gt_cameras;      // camera-to-world
  std::vector<PointMapGrid> gt_grids;
  TrackSet gt_tracks;                // camera-frame tracks, GT visibility and pixels, GT static mask
  TrackSet pseudo_tracks;            // pixels and visibility only; xyz = NaN
  Estimates estimates;

  int anchor() const { return config.anchor; }
  std::vector<Pose> gt_relative_poses() const;
  std::vector<Pose> estimated_relative_poses() const;
  std::vector<Vec3> gt_anchor_targets() const;
  double default_tau() const { return 0.02 * scene_diagonal; }
};

// Deterministic in config.seed. Estimates use perturb(..., config sigmas, seed).
SyntheticScene generate(const SceneConfig& config);

// Gaussian noise on grid values and track points, and left-multiplied pose
// noise exp(xi) * C_t with xi ~ N(0, sigma_c^2 / 6 I_6), so E|xi|^2 = sigma_c^2.
Estimates perturb(const SyntheticScene& scene, double sigma_p, double sigma_t, double sigma_c,
                  std::uint64_t seed);

// Observations for the supervised terms: GT pixels and visibility, GT static
// mask at tau, anchor-frame GT targets.
Observations supervised_observations(const SyntheticScene& scene, double tau);
// Observations for the self-supervised term: pseudo-track pixels and
// visibility, mask all ones until refreshed, no targets.
Observations pseudo_observations(const SyntheticScene& scene);

// Coupling state initialized from the estimates.
CouplingState initial_state(const SyntheticScene& scene);

// Scene directory layout (see docs/formats.md):
//   scene.json, gt/{cameras.txt, world_tracks.txt, tracks.txt, static_mask.txt, pointmaps/NNN.bin},
//   est/{cameras.txt, tracks.txt, pointmaps/NNN.bin}, pseudo_tracks.txt
void write_scene(const std::filesystem::path& dir, const SyntheticScene& scene);
SyntheticScene read_scene(const std::filesystem::path& dir);

}  // namespace trackcouple
