#include "trackcouple/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "trackcouple/error.hpp"

namespace trackcouple {

double huber(const Vec3& residual, double delta) {
  const double n = residual.norm();
  if (n <= delta) return 0.5 * n * n;
  return delta * (n - 0.5 * delta);
}

Vec3 huber_grad(const Vec3& residual, double delta) {
  const double n = residual.norm();
  if (n <= delta) return residual;
  return residual * (delta / n);
}

// ---------------------------------------------------------------------------
// CouplingState

CouplingState::CouplingState(std::span<const PointMapGrid> grids, const TrackSet& tracks,
                             std::span<const Pose> relative_poses) {
  if (grids.empty()) throw Error(ErrorCode::kConfigInvalid, "no pointmap grids");
  n_frames_ = static_cast<int>(grids.size());
  n_tracks_ = tracks.n_tracks;
  width_ = grids.front().width();
  height_ = grids.front().height();
  if (tracks.n_frames != n_frames_ || static_cast<int>(relative_poses.size()) != n_frames_) {
    throw Error(ErrorCode::kConfigInvalid, "grids, tracks and poses disagree on the frame count");
  }
  if (tracks.points.size() != static_cast<std::size_t>(n_tracks_) * n_frames_) {
    throw Error(ErrorCode::kConfigInvalid, "track points do not match N x T");
  }
  for (const auto& g : grids) {
    if (g.width() != width_ || g.height() != height_) {
      throw Error(ErrorCode::kConfigInvalid, "pointmap grids differ in size");
    }
  }

  grids_ = store_.add_block("grids", BlockRole::kPointmaps,
                            3 * static_cast<std::size_t>(n_frames_) * width_ * height_);
  tracks_ = store_.add_block("tracks", BlockRole::kTracks, 3 * tracks.points.size());
  poses_ = store_.add_block("poses", BlockRole::kPoses, 6 * static_cast<std::size_t>(n_frames_));

  auto gv = store_.values(grids_);
  for (int t = 0; t < n_frames_; ++t) {
    const auto src = grids[t].values();
    std::copy(src.begin(), src.end(), gv.begin() + static_cast<std::ptrdiff_t>(grid_offset(t)));
  }
  auto tv = store_.values(tracks_);
  for (std::size_t k = 0; k < tracks.points.size(); ++k) {
    tv[3 * k] = tracks.points[k].x();
    tv[3 * k + 1] = tracks.points[k].y();
    tv[3 * k + 2] = tracks.points[k].z();
  }
  base_poses_.assign(relative_poses.begin(), relative_poses.end());
}

GridView CouplingState::grid(int t) const {
  const auto all = store_.values(grids_);
  const std::size_t n = 3 * static_cast<std::size_t>(width_) * height_;
  return GridView{width_, height_, all.subspan(grid_offset(t), n)};
}

Vec3 CouplingState::track_point(int i, int t) const {
  const auto v = store_.values(tracks_);
  const std::size_t k = track_offset(i, t);
  return Vec3(v[k], v[k + 1], v[k + 2]);
}

PoseTangent CouplingState::tangent(int t) const {
  const auto v = store_.values(poses_);
  const std::size_t k = pose_offset(t);
  return PoseTangent{Vec3(v[k], v[k + 1], v[k + 2]), Vec3(v[k + 3], v[k + 4], v[k + 5])};
}

Pose CouplingState::relative_pose(int t) const {
  const PoseTangent d = tangent(t);
  if (d.omega.isZero(0.0) && d.upsilon.isZero(0.0)) return base_poses_[t];
  return perturb_left(base_poses_[t], d);
}

std::vector<Pose> CouplingState::relative_poses() const {
  std::vector<Pose> out;
  out.reserve(n_frames_);
  for (int t = 0; t < n_frames_; ++t) out.push_back(relative_pose(t));
  return out;
}

void CouplingState::retract_poses() {
  auto v = store_.values(poses_);
  for (int t = 0; t < n_frames_; ++t) {
    base_poses_[t] = relative_pose(t);
    std::fill_n(v.begin() + static_cast<std::ptrdiff_t>(pose_offset(t)), 6, 0.0);
  }
}

void CouplingState::set_relative_pose(int t, const Pose& pose) {
  base_poses_.at(t) = pose;
  auto v = store_.values(poses_);
  std::fill_n(v.begin() + static_cast<std::ptrdiff_t>(pose_offset(t)), 6, 0.0);
}

std::vector<PointMapGrid> CouplingState::export_grids() const {
  std::vector<PointMapGrid> out;
  out.reserve(n_frames_);
  for (int t = 0; t < n_frames_; ++t) {
    PointMapGrid g(width_, height_, t);
    const GridView v = grid(t);
    std::copy(v.values.begin(), v.values.end(), g.values().begin());
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<Vec3> CouplingState::export_track_points() const {
  std::vector<Vec3> out(static_cast<std::size_t>(n_tracks_) * n_frames_);
  for (int i = 0; i < n_tracks_; ++i) {
    for (int t = 0; t < n_frames_; ++t) out[static_cast<std::size_t>(i) * n_frames_ + t] = track_point(i, t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Terms

RoutingMask routing_of(Term term) {
  switch (term) {
    case kConsToPointmaps:
    case kSelfsupConsToPointmaps: return RoutingMask::pointmaps();
    case kConsToTracks:
    case kSelfsupConsToTracks:
    case kCamToTracks: return RoutingMask::tracks();
    case kCamToPoses: return RoutingMask::poses();
    case kSelfsupAnchor: return RoutingMask{false, true, true};
  }
  return {};
}

void TermStats::add(double residual_norm) {
  ++count;
  residual_sum += residual_norm;
  residual_max = std::max(residual_max, residual_norm);
}

void TermStats::merge(const TermStats& other) {
  count += other.count;
  skipped += other.skipped;
  residual_sum += other.residual_sum;
  residual_max = std::max(residual_max, other.residual_max);
}

namespace {

void check_shapes(const CouplingState& live, const CouplingState& detached, const Observations& obs) {
  if (live.n_frames() != detached.n_frames() || live.n_tracks() != detached.n_tracks() ||
      live.width() != detached.width() || live.height() != detached.height()) {
    throw Error(ErrorCode::kConfigInvalid, "live and detached states differ in shape");
  }
  const auto n = static_cast<std::size_t>(live.n_tracks()) * live.n_frames();
  if (obs.n_tracks != live.n_tracks() || obs.n_frames != live.n_frames() || obs.pixels.size() != n ||
      obs.weights.size() != n || obs.static_mask.size() != n) {
    throw Error(ErrorCode::kConfigInvalid, "observations do not match the state shape");
  }
  if (obs.anchor < 0 || obs.anchor >= live.n_frames()) {
    throw Error(ErrorCode::kConfigInvalid, "anchor frame out of range");
  }
  if (!obs.targets.empty() && obs.targets.size() != n) {
    throw Error(ErrorCode::kConfigInvalid, "targets do not match the state shape");
  }
}

Vec3 apply_stencil(const BilinearStencil& st, const GridView& g) {
  Vec3 out = Vec3::Zero();
  for (int c = 0; c < 4; ++c) {
    const std::size_t k = 3 * st.pixel[c];
    out += st.weight[c] * Vec3(g.values[k], g.values[k + 1], g.values[k + 2]);
  }
  return out;
}

// Scatters d/d(sample) = g onto the four corners of frame t's grid.
void scatter_to_grid(Tape& tape, const CouplingState& s, int t, const BilinearStencil& st, const Vec3& g,
                     RoutingMask routing) {
  const std::size_t base = s.grid_offset(t);
  for (int c = 0; c < 4; ++c) {
    tape.accumulate3(s.grids_block(), base + 3 * st.pixel[c], st.weight[c] * g, routing);
  }
}

// Left-perturbation gradient of psi . (exp(d) y) at d = 0: (y x psi, psi).
void scatter_to_pose(Tape& tape, const CouplingState& s, int t, const Vec3& y, const Vec3& g,
                     RoutingMask routing) {
  const std::size_t base = s.pose_offset(t);
  tape.accumulate3(s.poses_block(), base, y.cross(g), routing);
  tape.accumulate3(s.poses_block(), base + 3, g, routing);
}

// Shared by the supervised and self-supervised consistency terms.
double cons_terms(const CouplingState& live, const CouplingState& detached, const Observations& obs,
                  const TermContext& ctx, bool to_grids, bool to_tracks, RoutingMask grid_routing,
                  RoutingMask track_routing) {
  const int w_px = live.width();
  const int h_px = live.height();
  double value = 0.0;
  for (int i = 0; i < obs.n_tracks; ++i) {
    for (int t = 0; t < obs.n_frames; ++t) {
      const std::size_t k = obs.index(i, t);
      const double w = obs.weights[k];
      if (w < ctx.min_weight) {
        if (ctx.stats) ++ctx.stats->skipped;
        continue;
      }
      const BilinearStencil st = bilinear_stencil(w_px, h_px, obs.pixels[k]);
      if (to_grids) {
        const Vec3 r = detached.track_point(i, t) - apply_stencil(st, live.grid(t));
        value += w * huber(r, ctx.huber_delta);
        if (ctx.stats) ctx.stats->add(r.norm());
        if (ctx.tape) {
          const Vec3 g = -(ctx.grad_scale * w) * huber_grad(r, ctx.huber_delta);
          scatter_to_grid(*ctx.tape, live, t, st, g, grid_routing);
        }
      }
      if (to_tracks) {
        const Vec3 r = live.track_point(i, t) - apply_stencil(st, detached.grid(t));
        value += w * huber(r, ctx.huber_delta);
        if (ctx.stats) ctx.stats->add(r.norm());
        if (ctx.tape) {
          const Vec3 g = (ctx.grad_scale * w) * huber_grad(r, ctx.huber_delta);
          ctx.tape->accumulate3(live.tracks_block(), live.track_offset(i, t), g, track_routing);
        }
      }
    }
  }
  return value;
}

}  // namespace

double loss_cons(const CouplingState& live, const CouplingState& detached, const Observations& obs,
                 const TermContext& ctx) {
  check_shapes(live, detached, obs);
  return cons_terms(live, detached, obs, ctx, ctx.terms & kConsToPointmaps, ctx.terms & kConsToTracks,
                    routing_of(kConsToPointmaps), routing_of(kConsToTracks));
}

double loss_cam(const CouplingState& live, const CouplingState& detached, const Observations& obs,
                CamTarget target, bool static_gating, const TermContext& ctx) {
  check_shapes(live, detached, obs);
  const bool to_poses = ctx.terms & kCamToPoses;
  const bool to_tracks = ctx.terms & kCamToTracks;
  if (!obs.has_targets() && (to_tracks || (to_poses && target == CamTarget::kGroundTruth))) {
    throw Error(ErrorCode::kMissingTargets, "camera consistency needs anchor-frame GT targets");
  }
  const auto live_poses = live.relative_poses();
  const auto det_poses = detached.relative_poses();
  const RoutingMask pose_routing = routing_of(kCamToPoses);
  const RoutingMask track_routing = routing_of(kCamToTracks);
  const int x = obs.anchor;

  double value = 0.0;
  for (int i = 0; i < obs.n_tracks; ++i) {
    for (int t = 0; t < obs.n_frames; ++t) {
      const std::size_t k = obs.index(i, t);
      const double w = obs.weights[k];
      if (w < ctx.min_weight) {
        if (ctx.stats) ++ctx.stats->skipped;
        continue;
      }
      const bool is_static = !static_gating || obs.static_mask[k] != 0;
      if (to_poses && is_static) {
        bool usable = true;
        Vec3 tgt;
        if (target == CamTarget::kGroundTruth) {
          tgt = obs.targets[k];
        } else {
          const std::size_t kx = obs.index(i, x);
          usable = obs.weights[kx] >= ctx.min_weight;
          if (usable) tgt = sample(detached.grid(x), obs.pixels[kx]);
        }
        if (usable) {
          const Vec3 y = live_poses[t] * detached.track_point(i, t);
          const Vec3 r = y - tgt;
          value += w * huber(r, ctx.huber_delta);
          if (ctx.stats) ctx.stats->add(r.norm());
          if (ctx.tape) {
            const Vec3 g = (ctx.grad_scale * w) * huber_grad(r, ctx.huber_delta);
            scatter_to_pose(*ctx.tape, live, t, y, g, pose_routing);
          }
        } else if (ctx.stats) {
          ++ctx.stats->skipped;
        }
      }
      if (to_tracks) {
        const Vec3 r = det_poses[t] * live.track_point(i, t) - obs.targets[k];
        value += w * huber(r, ctx.huber_delta);
        if (ctx.stats) ctx.stats->add(r.norm());
        if (ctx.tape) {
          const Vec3 g = (ctx.grad_scale * w) * huber_grad(r, ctx.huber_delta);
          ctx.tape->accumulate3(live.tracks_block(), live.track_offset(i, t),
                                det_poses[t].rotation().transpose() * g, track_routing);
        }
      }
    }
  }
  return value;
}

double loss_selfsup(const CouplingState& live, const CouplingState& detached,
                    const Observations& pseudo, bool static_gating, const TermContext& ctx) {
  check_shapes(live, detached, pseudo);
  double value = cons_terms(live, detached, pseudo, ctx, ctx.terms & kSelfsupConsToPointmaps,
                            ctx.terms & kSelfsupConsToTracks, routing_of(kSelfsupConsToPointmaps),
                            routing_of(kSelfsupConsToTracks));
  if (!(ctx.terms & kSelfsupAnchor)) return value;

  const auto live_poses = live.relative_poses();
  const RoutingMask routing = routing_of(kSelfsupAnchor);
  const int x = pseudo.anchor;
  for (int i = 0; i < pseudo.n_tracks; ++i) {
    const std::size_t kx = pseudo.index(i, x);
    const bool anchor_visible = pseudo.weights[kx] >= ctx.min_weight;
    BilinearStencil st_x;
    if (anchor_visible) st_x = bilinear_stencil(live.width(), live.height(), pseudo.pixels[kx]);
    for (int t = 0; t < pseudo.n_frames; ++t) {
      if (t == x) continue;  // residual vanishes identically
      const std::size_t k = pseudo.index(i, t);
      const double w = pseudo.weights[k];
      if (w < ctx.min_weight || !anchor_visible) {
        if (ctx.stats) ++ctx.stats->skipped;
        continue;
      }
      if (static_gating && pseudo.static_mask[k] == 0) continue;
      const Vec3 y = live_poses[t] * sample(detached.grid(t), pseudo.pixels[k]);
      const Vec3 r = y - apply_stencil(st_x, live.grid(x));
      value += w * huber(r, ctx.huber_delta);
      if (ctx.stats) ctx.stats->add(r.norm());
      if (ctx.tape) {
        const Vec3 g = (ctx.grad_scale * w) * huber_grad(r, ctx.huber_delta);
        scatter_to_pose(*ctx.tape, live, t, y, g, routing);
        scatter_to_grid(*ctx.tape, live, x, st_x, -g, routing);
      }
    }
  }
  return value;
}

LossBreakdown total_loss(const LossConfig& config, const CouplingState& live,
                         const CouplingState& detached, const Observations* supervised,
                         const Observations* pseudo, Tape* tape, TermMask terms) {
  if (!(config.huber_delta > 0.0)) throw Error(ErrorCode::kConfigInvalid, "huber_delta must be positive");
  if (config.weight_cons < 0.0 || config.weight_cam < 0.0 || config.weight_selfsup < 0.0) {
    throw Error(ErrorCode::kConfigInvalid, "term weights must be non-negative");
  }
  LossBreakdown b;
  TermContext ctx;
  ctx.huber_delta = config.huber_delta;
  ctx.min_weight = config.min_weight;
  ctx.tape = tape;
  ctx.terms = terms;

  if (config.enable_cons && (terms & kConsTerms)) {
    if (!supervised) throw Error(ErrorCode::kConfigInvalid, "consistency term enabled without observations");
    ctx.grad_scale = config.weight_cons;
    ctx.stats = &b.cons_stats;
    b.cons_value = loss_cons(live, detached, *supervised, ctx);
  }
  if (config.enable_cam && (terms & kCamTerms)) {
    if (!supervised) throw Error(ErrorCode::kConfigInvalid, "camera term enabled without observations");
    ctx.grad_scale = config.weight_cam;
    ctx.stats = &b.cam_stats;
    b.cam_value = loss_cam(live, detached, *supervised, config.cam_target, config.static_gating, ctx);
  }
  if (config.enable_selfsup && (terms & kSelfsupTerms)) {
    if (!pseudo) throw Error(ErrorCode::kConfigInvalid, "self-supervised term enabled without pseudo tracks");
    ctx.grad_scale = config.weight_selfsup;
    ctx.stats = &b.selfsup_stats;
    b.selfsup_value = loss_selfsup(live, detached, *pseudo, config.static_gating, ctx);
  }
  b.total = config.weight_cons * b.cons_value + config.weight_cam * b.cam_value +
            config.weight_selfsup * b.selfsup_value;
  return b;
}

std::vector<std::uint8_t> selfsup_static_mask(const CouplingState& state, const Observations& pseudo,
                                              double tau, double min_weight) {
  check_shapes(state, state, pseudo);
  if (!(tau > 0.0)) throw Error(ErrorCode::kConfigInvalid, "tau_static must be positive");
  const auto poses = state.relative_poses();
  std::vector<std::uint8_t> mask(pseudo.weights.size(), 0);
  std::vector<Vec3> reproj(pseudo.n_frames);
  std::vector<Vec3> visible;
  for (int i = 0; i < pseudo.n_tracks; ++i) {
    visible.clear();
    for (int t = 0; t < pseudo.n_frames; ++t) {
      const std::size_t k = pseudo.index(i, t);
      if (pseudo.weights[k] < min_weight) continue;
      reproj[t] = poses[t] * sample(state.grid(t), pseudo.pixels[k]);
      visible.push_back(reproj[t]);
    }
    if (visible.empty()) continue;
    const Vec3 ref = geometric_median(visible);
    for (int t = 0; t < pseudo.n_frames; ++t) {
      const std::size_t k = pseudo.index(i, t);
      if (pseudo.weights[k] < min_weight) continue;
      mask[k] = (reproj[t] - ref).norm() < tau ? 1 : 0;
    }
  }
  return mask;
}

}  // namespace trackcouple
