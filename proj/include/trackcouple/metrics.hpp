#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "trackcouple/pointmap.hpp"
#include "trackcouple/pose.hpp"
#include "trackcouple/tracks.hpp"

namespace trackcouple {

// Conventions: trajectory errors in scene units / degrees; accuracies and
// tracking scores in percent [0, 100]; depth delta and NC as fractions [0, 1].

// RMS of |gt - S est| after aligning est onto gt (Umeyama, optional scale).
// Throws kDegenerateConfiguration for fewer than three or collinear positions.
double ate_positions(std::span<const Vec3> est, std::span<const Vec3> gt, bool with_scale = true);
// Same on the camera centers of camera-to-world poses.
double ate(const std::vector<Pose>& est, const std::vector<Pose>& gt, bool with_scale = true);

struct RpeResult {
  double trans = 0.0;    // RMS translation error
  double rot_deg = 0.0;  // RMS rotation angle, degrees
  int pairs = 0;
};
// Relative motion over `step` frames, no alignment.
RpeResult rpe(const std::vector<Pose>& est, const std::vector<Pose>& gt, int step = 1);

struct RelPoseAccuracy {
  double rra = 0.0;  // percent of pairs with rotation error < max threshold
  double rta = 0.0;  // percent of pairs with translation-direction error < max threshold
  double auc = 0.0;  // percent; trapezoid over integer thresholds 1..max of min(RRA(tau), RTA(tau))
  int pairs = 0;     // pairs scored
  int skipped = 0;   // pairs with a GT or estimated baseline below 1e-9
};
// All unordered frame pairs. Throws kDegenerateConfiguration when fewer than
// two frames or every pair is skipped.
RelPoseAccuracy rel_pose_accuracy(const std::vector<Pose>& est, const std::vector<Pose>& gt,
                                  int max_threshold_deg = 30);

// Per-pair errors, exposed for diagnostics and tests.
struct PairError {
  int i = 0;
  int j = 0;
  double rot_deg = 0.0;
  double trans_deg = 0.0;
};
std::vector<PairError> pair_errors(const std::vector<Pose>& est, const std::vector<Pose>& gt, int* skipped = nullptr);

struct TapvidOptions {
  // Pixel thresholds scaled to depth as thr * z_gt / focal.
  std::vector<double> thresholds{1.0, 2.0, 4.0, 8.0, 16.0};
  double focal = 256.0;
  double visibility_cutoff = 0.5;
};
struct TapvidResult {
  double aj = 0.0;
  double apd = 0.0;
  double oa = 0.0;
};
// Throws kConfigInvalid on shape mismatch, kEmptyValidMask when no GT point is visible.
TapvidResult tapvid3d_metrics(const TrackSet& est, const TrackSet& gt, const TapvidOptions& options = {});

struct PointmapMetricOptions {
  bool align = true;       // Umeyama on index-matched points
  bool with_scale = true;
  bool use_icp = false;    // rigid ICP after Umeyama
  int normal_neighbors = 16;
};
struct PointmapMetrics {
  double acc_mean = 0.0, acc_median = 0.0;
  double comp_mean = 0.0, comp_median = 0.0;
  double nc_mean = 0.0, nc_median = 0.0;
};
// Acc: pred -> gt nearest distances; Comp: gt -> pred; NC: |cos| between PCA
// normals of nearest pairs, both directions averaged.
PointmapMetrics pointmap_metrics(std::span<const Vec3> pred, std::span<const Vec3> gt,
                                 const PointmapMetricOptions& options = {});

// Unit normals from a plane fit over the k nearest neighbors (self included).
std::vector<Vec3> estimate_normals(std::span<const Vec3> points, int k);

enum class DepthAlignment { kScale, kScaleShift };
enum class DepthGrouping { kPerImage, kPerSequence };
struct DepthOptions {
  DepthAlignment alignment = DepthAlignment::kScale;
  DepthGrouping grouping = DepthGrouping::kPerSequence;
  // Scale mode only: least-squares scale instead of median(gt / pred).
  bool least_squares_scale = false;
};
struct DepthMetrics {
  double abs_rel = 0.0;
  double delta1 = 0.0;  // fraction of pixels with max(p/g, g/p) < 1.25; p <= 0 counts as a miss
};
// `valid` may be empty; otherwise one mask per image. Pixels need gt > 0.
// Throws kEmptyValidMask when nothing is valid.
DepthMetrics depth_metrics(const std::vector<std::vector<double>>& pred,
                           const std::vector<std::vector<double>>& gt,
                           const std::vector<std::vector<std::uint8_t>>& valid, const DepthOptions& options = {});

// Depth image of a pointmap: its camera-frame z channel.
std::vector<double> depth_from_pointmap(const PointMapGrid& grid);

double median(std::vector<double> values);

}  // namespace trackcouple
