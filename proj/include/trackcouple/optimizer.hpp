#pragma once

#include <optional>
#include <string>
#include <vector>

#include "trackcouple/coupling.hpp"
#include "trackcouple/synthetic.hpp"

namespace trackcouple {

struct OptimConfig {
  LossConfig loss;
  // Per-block gradient-descent steps.
  double step_grids = 0.02;
  double step_tracks = 0.005;
  double step_poses = 0.02;
  int max_epochs = 1000;
  // Converged when the relative loss change over `convergence_window`
  // epochs drops below `convergence_tol`.
  double convergence_tol = 1e-8;
  int convergence_window = 5;
  // Stationary when the largest gradient entry is at most this.
  double gradient_tol = 1e-12;
  double loss_floor = 1e-30;
  // Rescales the full gradient to this L2 norm when exceeded; 0 disables.
  double clip_norm = 0.0;
  int max_halvings = 20;
  double divergence_factor = 10.0;
  bool freeze_anchor = true;
  // Blocks switched off keep their initial values (e.g. pose-only refinement).
  bool update_grids = true;
  bool update_tracks = true;
  bool update_poses = true;
  // Self-supervised mode re-derives its static mask at every epoch.
  bool refresh_selfsup_mask = true;

  // Throws kConfigInvalid naming the offending field.
  void validate() const;
};

enum class StopReason { kConverged, kStationary, kMaxEpochs, kStalled };
std::string to_string(StopReason r);

struct EpochRecord {
  int epoch = 0;
  LossBreakdown loss;     // at the start of the epoch
  double grad_max = 0.0;  // infinity norm of the routed gradient
  double step_scale = 0.0;  // accepted backtracking factor; 0 when no step was taken
  int halvings = 0;
  double pose_error = 0.0;  // after the epoch's update
};

// Quality of a state against ground truth.
struct StateMetrics {
  double pose_error = 0.0;      // mean over t != x of |log(C_est * C_gt^-1)|
  double ate = 0.0;             // on relative-pose positions, similarity-aligned; NaN if degenerate
  double pointmap_error = 0.0;  // mean |P_est - P_gt| over all pixels
  double track_error = 0.0;     // mean |p_est - p_gt| over visible samples
};

struct OptimReport {
  std::vector<EpochRecord> epochs;
  StopReason stop = StopReason::kMaxEpochs;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  StateMetrics initial;
  StateMetrics final;
};

struct GroundTruthView {
  std::vector<Pose> relative_poses;
  std::vector<PointMapGrid> grids;
  TrackSet tracks;
  int anchor = 0;
};
GroundTruthView ground_truth_view(const SyntheticScene& scene);

StateMetrics evaluate_state(const CouplingState& state, const GroundTruthView& gt);

// Plain gradient descent with per-block steps and backtracking (halve on
// increase). Poses are retracted by exponentiating their tangents. Throws
// kDiverged when backtracking is exhausted with the loss above
// divergence_factor times its initial value.
OptimReport optimize(CouplingState& state, const Observations* supervised, Observations* pseudo,
                     const OptimConfig& config, const GroundTruthView* gt = nullptr);

// Convenience: builds the state and observations from a scene.
OptimReport optimize_scene(const SyntheticScene& scene, const OptimConfig& config,
                           CouplingState* final_state = nullptr);

// tau_static of a config resolved against a scene.
double resolve_tau(const LossConfig& loss, const SyntheticScene& scene);

}  // namespace trackcouple
