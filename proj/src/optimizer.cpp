#include "trackcouple/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "trackcouple/error.hpp"
#include "trackcouple/metrics.hpp"

namespace trackcouple {

namespace {

[[noreturn]] void invalid(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::kConfigInvalid, field + ": " + why);
}

double tangent_error(const Pose& est, const Pose& gt) {
  try {
    return log_map(est * gt.inverse()).norm();
  } catch (const Error&) {
    // Rotation error at pi: report the angle plus the translation offset.
    return std::numbers::pi + (est.translation() - gt.translation()).norm();
  }
}

double pose_error(const std::vector<Pose>& est, const std::vector<Pose>& gt, int anchor) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t t = 0; t < est.size(); ++t) {
    if (static_cast<int>(t) == anchor) continue;
    sum += tangent_error(est[t], gt[t]);
    ++n;
  }
  return n ? sum / n : 0.0;
}

double resolved_tau(const LossConfig& loss) { return loss.tau_static.value_or(loss.tau_static_fraction); }

}  // namespace

void OptimConfig::validate() const {
  if (!(step_grids > 0.0)) invalid("step_grids", "must be positive");
  if (!(step_tracks > 0.0)) invalid("step_tracks", "must be positive");
  if (!(step_poses > 0.0)) invalid("step_poses", "must be positive");
  if (max_epochs < 1) invalid("max_epochs", "must be at least 1");
  if (!(convergence_tol >= 0.0)) invalid("convergence_tol", "must be >= 0");
  if (convergence_window < 1) invalid("convergence_window", "must be at least 1");
  if (!(gradient_tol >= 0.0)) invalid("gradient_tol", "must be >= 0");
  if (!(clip_norm >= 0.0)) invalid("clip_norm", "must be >= 0");
  if (max_halvings < 0) invalid("max_halvings", "must be >= 0");
  if (!(divergence_factor >= 1.0)) invalid("divergence_factor", "must be >= 1");
  if (!(loss.huber_delta > 0.0)) invalid("huber_delta", "must be positive");
  if (loss.tau_static && !(*loss.tau_static > 0.0)) invalid("tau_static", "must be positive");
  if (!(loss.tau_static_fraction > 0.0)) invalid("tau_static_fraction", "must be positive");
  if (loss.weight_cons < 0.0) invalid("weight_cons", "must be >= 0");
  if (loss.weight_cam < 0.0) invalid("weight_cam", "must be >= 0");
  if (loss.weight_selfsup < 0.0) invalid("weight_selfsup", "must be >= 0");
  if (!(loss.min_weight >= 0.0)) invalid("min_weight", "must be >= 0");
  if (!update_grids && !update_tracks && !update_poses) invalid("update_poses", "no block left to update");
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::kConverged: return "converged";
    case StopReason::kStationary: return "stationary";
    case StopReason::kMaxEpochs: return "max_epochs";
    case StopReason::kStalled: return "stalled";
  }
  return "unknown";
}

GroundTruthView ground_truth_view(const SyntheticScene& scene) {
  return GroundTruthView{scene.gt_relative_poses(), scene.gt_grids, scene.gt_tracks, scene.anchor()};
}

StateMetrics evaluate_state(const CouplingState& state, const GroundTruthView& gt) {
  StateMetrics m;
  const auto poses = state.relative_poses();
  m.pose_error = pose_error(poses, gt.relative_poses, gt.anchor);

  std::vector<Vec3> est_pos, gt_pos;
  for (std::size_t t = 0; t < poses.size(); ++t) {
    est_pos.push_back(poses[t].translation());
    gt_pos.push_back(gt.relative_poses[t].translation());
  }
  try {
    m.ate = ate_positions(est_pos, gt_pos, true);
  } catch (const Error&) {
    m.ate = std::numeric_limits<double>::quiet_NaN();
  }

  double sum = 0.0;
  std::size_t n = 0;
  for (int t = 0; t < state.n_frames(); ++t) {
    const GridView est = state.grid(t);
    const GridView ref = gt.grids[t].view();
    for (int y = 0; y < est.height; ++y) {
      for (int x = 0; x < est.width; ++x) {
        sum += (est.at(x, y) - ref.at(x, y)).norm();
        ++n;
      }
    }
  }
  m.pointmap_error = n ? sum / static_cast<double>(n) : 0.0;

  sum = 0.0;
  n = 0;
  for (int i = 0; i < state.n_tracks(); ++i) {
    for (int t = 0; t < state.n_frames(); ++t) {
      const std::size_t k = gt.tracks.index(i, t);
      if (gt.tracks.visibility[k] < 0.5) continue;
      sum += (state.track_point(i, t) - gt.tracks.points[k]).norm();
      ++n;
    }
  }
  m.track_error = n ? sum / static_cast<double>(n) : 0.0;
  return m;
}

OptimReport optimize(CouplingState& state, const Observations* supervised, Observations* pseudo,
                     const OptimConfig& config, const GroundTruthView* gt) {
  config.validate();
  OptimReport report;
  if (gt) report.initial = evaluate_state(state, *gt);

  const bool selfsup = config.loss.enable_selfsup && pseudo;
  const double tau = resolved_tau(config.loss);
  const int anchor = supervised ? supervised->anchor : (pseudo ? pseudo->anchor : (gt ? gt->anchor : 0));
  const BlockId blocks[3] = {state.grids_block(), state.tracks_block(), state.poses_block()};
  const double steps[3] = {config.step_grids, config.step_tracks, config.step_poses};

  Tape tape(state.store());
  double alpha = 1.0;
  std::vector<double> history;
  report.stop = StopReason::kMaxEpochs;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    if (selfsup && config.refresh_selfsup_mask) {
      pseudo->static_mask = selfsup_static_mask(state, *pseudo, tau, config.loss.min_weight);
    }
    tape.reset();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = total_loss(config.loss, state, supervised, pseudo, &tape);
    const double loss = rec.loss.total;
    if (epoch == 1) report.initial_loss = loss;
    report.final_loss = loss;
    if (!std::isfinite(loss)) throw Error(ErrorCode::kDiverged, "non-finite loss at epoch " + std::to_string(epoch));
    if (config.freeze_anchor) {
      auto g = tape.gradient(state.poses_block());
      std::fill_n(g.begin() + static_cast<std::ptrdiff_t>(state.pose_offset(anchor)), 6, 0.0);
    }
    const bool update[3] = {config.update_grids, config.update_tracks, config.update_poses};
    for (int b = 0; b < 3; ++b) {
      if (update[b]) continue;
      auto g = tape.gradient(blocks[b]);
      std::fill(g.begin(), g.end(), 0.0);
    }
    rec.grad_max = tape.max_abs();
    rec.pose_error = gt ? pose_error(state.relative_poses(), gt->relative_poses, gt->anchor) : 0.0;

    const auto finish = [&](StopReason reason) {
      report.stop = reason;
      report.epochs.push_back(rec);
    };
    if (rec.grad_max <= config.gradient_tol || loss <= config.loss_floor) {
      finish(epoch == 1 ? StopReason::kStationary : StopReason::kConverged);
      break;
    }
    history.push_back(loss);
    if (history.size() > static_cast<std::size_t>(config.convergence_window)) {
      const double prev = history[history.size() - 1 - config.convergence_window];
      if (std::abs(prev - loss) <= config.convergence_tol * std::max(prev, config.loss_floor)) {
        finish(StopReason::kConverged);
        break;
      }
    }

    double clip = 1.0;
    if (config.clip_norm > 0.0) {
      double sq = 0.0;
      for (BlockId b : blocks) {
        for (double v : tape.gradient(b)) sq += v * v;
      }
      const double norm = std::sqrt(sq);
      if (norm > config.clip_norm) clip = config.clip_norm / norm;
    }

    const CouplingState saved = state;
    double trial = std::min(1.0, 2.0 * alpha);
    double last_trial_loss = std::numeric_limits<double>::quiet_NaN();
    bool accepted = false;
    for (int h = 0; h <= config.max_halvings; ++h) {
      for (int b = 0; b < 3; ++b) {
        auto values = state.store().values(blocks[b]);
        const auto grad = tape.gradient(blocks[b]);
        const double s = trial * steps[b] * clip;
        for (std::size_t k = 0; k < values.size(); ++k) values[k] -= s * grad[k];
      }
      state.retract_poses();
      last_trial_loss = total_loss(config.loss, state, supervised, pseudo, nullptr).total;
      if (last_trial_loss <= loss) {
        accepted = true;
        rec.halvings = h;
        break;
      }
      state = saved;
      trial *= 0.5;
    }
    if (!accepted) {
      rec.halvings = config.max_halvings;
      if (!(last_trial_loss <= config.divergence_factor * report.initial_loss)) {
        throw Error(ErrorCode::kDiverged, "loss " + std::to_string(last_trial_loss) + " exceeds " +
                                              std::to_string(config.divergence_factor) +
                                              "x its initial value after backtracking");
      }
      finish(StopReason::kStalled);
      break;
    }
    alpha = trial;
    rec.step_scale = trial;
    if (gt) rec.pose_error = pose_error(state.relative_poses(), gt->relative_poses, gt->anchor);
    report.final_loss = last_trial_loss;
    report.epochs.push_back(rec);
  }
  if (gt) report.final = evaluate_state(state, *gt);
  return report;
}

double resolve_tau(const LossConfig& loss, const SyntheticScene& scene) {
  return loss.tau_static.value_or(loss.tau_static_fraction * scene.scene_diagonal);
}

OptimReport optimize_scene(const SyntheticScene& scene, const OptimConfig& config, CouplingState* final_state) {
  OptimConfig cfg = config;
  cfg.loss.tau_static = resolve_tau(config.loss, scene);
  cfg.validate();
  const Observations supervised = supervised_observations(scene, *cfg.loss.tau_static);
  Observations pseudo = pseudo_observations(scene);
  CouplingState state = initial_state(scene);
  const GroundTruthView gt = ground_truth_view(scene);
  const bool uses_targets = cfg.loss.enable_cons || cfg.loss.enable_cam;
  OptimReport report = optimize(state, uses_targets ? &supervised : nullptr, cfg.loss.enable_selfsup ? &pseudo : nullptr, cfg, &gt);
  if (final_state) *final_state = state;
  return report;
}

}  // namespace trackcouple
