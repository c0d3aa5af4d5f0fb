#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "trackcouple/pointmap.hpp"
#include "trackcouple/pose.hpp"

namespace trackcouple {

// N x T camera-coordinate trajectories. Entry (i, t) lives at i * T + t and
// point(i, t) is expressed in the camera coordinates of frame t.
struct TrackSet {
  int n_tracks = 0;
  int n_frames = 0;
  std::vector<Vec3> points;
  std::vector<double> visibility;
  std::vector<PixelLocation> query_pixels;
  std::vector<std::uint8_t> static_mask;

  static TrackSet zeros(int n_tracks, int n_frames);

  std::size_t index(int i, int t) const { return static_cast<std::size_t>(i) * n_frames + t; }
  std::size_t size() const { return points.size(); }

  // Throws kConfigInvalid on visibility outside [0, 1], non-finite visible
  // entries or inconsistent array sizes.
  void validate() const;
};

// Ground-truth world trajectories X*, same (i, t) indexing as TrackSet.
struct WorldTrackSet {
  int n_tracks = 0;
  int n_frames = 0;
  std::vector<Vec3> points;
  std::vector<double> visibility;  // empty means visible everywhere

  std::size_t index(int i, int t) const { return static_cast<std::size_t>(i) * n_frames + t; }
  bool visible(int i, int t) const { return visibility.empty() || visibility[index(i, t)] >= 0.5; }
};

enum class StaticReference {
  kTemporalMedian,  // geometric median over visible frames
  kAnchorFrame,     // position at the anchor frame
};

// Rotation- and translation-equivariant multivariate median (Weiszfeld).
Vec3 geometric_median(std::span<const Vec3> points);

// m(i, t) = 1 iff ||X*(i, t) - ref(i)|| < tau, evaluated in the coordinates of
// the anchor camera. Rigid maps preserve the displacement norms, so the result
// does not depend on the anchor pose.
std::vector<std::uint8_t> static_mask(const WorldTrackSet& gt, int anchor, double tau,
                                      const Pose& anchor_camera = Pose::identity(),
                                      StaticReference reference = StaticReference::kTemporalMedian);

// World point expressed in the camera coordinates of a camera-to-world pose.
Vec3 camera_frame_position(const Vec3& world_point, const Pose& c_t);

// GT world tracks expressed in the anchor camera coordinates.
std::vector<Vec3> anchor_targets(const WorldTrackSet& gt, const Pose& c_x);

// Track file: a header line "N T", then one row per (i, t):
//   i t x y z visibility px py
// Pseudo 2D tracks use NaN for x, y and z.
void write_tracks(const std::filesystem::path& path, const TrackSet& tracks);
TrackSet read_tracks(const std::filesystem::path& path);

void write_world_tracks(const std::filesystem::path& path, const WorldTrackSet& tracks);
WorldTrackSet read_world_tracks(const std::filesystem::path& path);

// Static mask file: a header line "N T", then N lines of T characters in {0, 1}.
void write_static_mask(const std::filesystem::path& path, int n_tracks, int n_frames,
                       std::span<const std::uint8_t> mask);
std::vector<std::uint8_t> read_static_mask(const std::filesystem::path& path, int& n_tracks,
                                           int& n_frames);

}  // namespace trackcouple
