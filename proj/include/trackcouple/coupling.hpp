#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "trackcouple/grad.hpp"
#include "trackcouple/pointmap.hpp"
#include "trackcouple/pose.hpp"
#include "trackcouple/tracks.hpp"

namespace trackcouple {

// rho(r) = 0.5 |r|^2 for |r| <= delta, delta (|r| - 0.5 delta) beyond.
double huber(const Vec3& residual, double delta);
// d rho / d r.
Vec3 huber_grad(const Vec3& residual, double delta);

// Everything the coupling terms optimize: per-frame pointmaps, camera-frame
// track points and relative poses C_{t->x}. Poses are exp(tangent_t) * base_t;
// the tangent block stays at zero between optimizer steps, so its gradient is
// the left-perturbation gradient at the current pose.
class CouplingState {
 public:
  CouplingState(std::span<const PointMapGrid> grids, const TrackSet& tracks,
                std::span<const Pose> relative_poses);

  int n_frames() const { return n_frames_; }
  int n_tracks() const { return n_tracks_; }
  int width() const { return width_; }
  int height() const { return height_; }

  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }
  BlockId grids_block() const { return grids_; }
  BlockId tracks_block() const { return tracks_; }
  BlockId poses_block() const { return poses_; }

  std::size_t grid_offset(int t) const { return 3 * static_cast<std::size_t>(t) * width_ * height_; }
  std::size_t track_offset(int i, int t) const {
    return 3 * (static_cast<std::size_t>(i) * n_frames_ + t);
  }
  std::size_t pose_offset(int t) const { return 6 * static_cast<std::size_t>(t); }

  GridView grid(int t) const;
  Vec3 track_point(int i, int t) const;
  PoseTangent tangent(int t) const;
  const Pose& base_pose(int t) const { return base_poses_[t]; }
  Pose relative_pose(int t) const;
  std::vector<Pose> relative_poses() const;

  // base_t <- exp(tangent_t) * base_t, tangent_t <- 0.
  void retract_poses();
  void set_relative_pose(int t, const Pose& pose);

  std::vector<PointMapGrid> export_grids() const;
  std::vector<Vec3> export_track_points() const;

 private:
  int n_frames_ = 0;
  int n_tracks_ = 0;
  int width_ = 0;
  int height_ = 0;
  ParamStore store_;
  BlockId grids_;
  BlockId tracks_;
  BlockId poses_;
  std::vector<Pose> base_poses_;
};

// Fixed per-sample data for one supervision source, indexed like TrackSet.
struct Observations {
  int n_tracks = 0;
  int n_frames = 0;
  int anchor = 0;
  std::vector<PixelLocation> pixels;       // q_{t,i}
  std::vector<double> weights;             // w_{t,i}
  std::vector<std::uint8_t> static_mask;   // m_{t,i}
  std::vector<Vec3> targets;               // anchor-frame GT targets; empty when unsupervised

  std::size_t index(int i, int t) const { return static_cast<std::size_t>(i) * n_frames + t; }
  bool has_targets() const { return !targets.empty(); }
};

// Target of the pose-updating camera term.
enum class CamTarget {
  kGroundTruth,   // GT anchor targets
  kAnchorSample,  // detached anchor-frame pointmap sample at q_{x,i}
};

enum Term : unsigned {
  kConsToPointmaps = 1u << 0,
  kConsToTracks = 1u << 1,
  kCamToPoses = 1u << 2,
  kCamToTracks = 1u << 3,
  kSelfsupConsToPointmaps = 1u << 4,
  kSelfsupConsToTracks = 1u << 5,
  kSelfsupAnchor = 1u << 6,
};
using TermMask = unsigned;
constexpr TermMask kConsTerms = kConsToPointmaps | kConsToTracks;
constexpr TermMask kCamTerms = kCamToPoses | kCamToTracks;
constexpr TermMask kSelfsupTerms = kSelfsupConsToPointmaps | kSelfsupConsToTracks | kSelfsupAnchor;
constexpr TermMask kAllTerms = kConsTerms | kCamTerms | kSelfsupTerms;

RoutingMask routing_of(Term term);

struct TermStats {
  std::size_t count = 0;
  std::size_t skipped = 0;  // samples with weight below the cutoff
  double residual_sum = 0.0;
  double residual_max = 0.0;

  double residual_mean() const { return count ? residual_sum / static_cast<double>(count) : 0.0; }
  void add(double residual_norm);
  void merge(const TermStats& other);
};

struct LossConfig {
  bool enable_cons = true;
  bool enable_cam = true;
  bool enable_selfsup = false;
  double weight_cons = 1.0;
  double weight_cam = 1.0;
  double weight_selfsup = 1.0;
  double huber_delta = 0.05;
  // Absolute threshold; when unset, tau_static_fraction * scene diagonal.
  std::optional<double> tau_static;
  double tau_static_fraction = 0.02;
  CamTarget cam_target = CamTarget::kGroundTruth;
  bool static_gating = true;
  double min_weight = 1e-3;
};

struct LossBreakdown {
  double cons_value = 0.0;
  double cam_value = 0.0;
  double selfsup_value = 0.0;
  double total = 0.0;
  TermStats cons_stats;
  TermStats cam_stats;
  TermStats selfsup_stats;
};

// Shared knobs of one term evaluation. `grad_scale` multiplies every partial
// sent to the tape (the term weight in a weighted sum).
struct TermContext {
  double huber_delta = 0.05;
  double min_weight = 1e-3;
  double grad_scale = 1.0;
  TermMask terms = kAllTerms;
  Tape* tape = nullptr;
  TermStats* stats = nullptr;
};

// Every term reads the values behind a stop-gradient from `detached` and the
// values that receive gradient from `live`. Pass the same state twice for an
// ordinary evaluation; a frozen copy makes finite differences see the same
// stop-gradients as the analytic path.

// sum w [rho(sg[p] - p~) + rho(p - sg[p~])], p~ = Sample(P_t, q_{t,i}).
double loss_cons(const CouplingState& live, const CouplingState& detached, const Observations& obs,
                 const TermContext& ctx);

// sum w [m rho(C Hom(sg[p]) - target) + rho(sg[C] Hom(p) - pbar)]. The first
// term reaches only pose tangents and only through static samples; the second
// reaches only track points. Throws kMissingTargets without GT targets.
double loss_cam(const CouplingState& live, const CouplingState& detached, const Observations& obs,
                CamTarget target, bool static_gating, const TermContext& ctx);

// Target-free variant on pseudo 2D tracks: the consistency terms unchanged plus
// sum w m rho(C Hom(sg[p~_t]) - p~_x), which reaches the poses and the anchor
// pointmap. No GT targets are read.
double loss_selfsup(const CouplingState& live, const CouplingState& detached,
                    const Observations& pseudo, bool static_gating, const TermContext& ctx);

// Weighted sum of the enabled terms. `supervised` feeds the consistency and
// camera terms, `pseudo` feeds the self-supervised one; either may be null
// when its terms are disabled.
LossBreakdown total_loss(const LossConfig& config, const CouplingState& live,
                         const CouplingState& detached, const Observations* supervised,
                         const Observations* pseudo, Tape* tape, TermMask terms = kAllTerms);

inline LossBreakdown total_loss(const LossConfig& config, const CouplingState& state,
                                const Observations* supervised, const Observations* pseudo,
                                Tape* tape) {
  return total_loss(config, state, state, supervised, pseudo, tape);
}

// Provisional static mask without GT: a sample is static when its pointmap
// sample reprojected into the anchor frame stays within tau of the track's
// temporal (geometric) median.
std::vector<std::uint8_t> selfsup_static_mask(const CouplingState& state, const Observations& pseudo,
                                              double tau, double min_weight = 1e-3);

}  // namespace trackcouple
