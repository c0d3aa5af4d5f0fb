#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "trackcouple/error.hpp"
#include "trackcouple/gradcheck.hpp"

using namespace trackcouple;
using support::all_zero;

namespace {

double rel_diff(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

TermContext context(double delta, TermMask terms, Tape* tape = nullptr) {
  TermContext c;
  c.huber_delta = delta;
  c.terms = terms;
  c.tape = tape;
  return c;
}

// One track, one frame, 2x2 grid, query at the cell center.
struct Tiny {
  std::vector<PointMapGrid> grids;
  TrackSet tracks;
  Observations obs;
  CouplingState state;

  static Tiny make(const Vec3& p) {
    std::vector<PointMapGrid> g{PointMapGrid(2, 2, 0)};
    g[0].set(0, 0, Vec3(0, 0, 1));
    g[0].set(1, 0, Vec3(0.02, 0, 1));
    g[0].set(0, 1, Vec3(0, 0.02, 1));
    g[0].set(1, 1, Vec3(0.02, 0.02, 1.04));
    TrackSet t = TrackSet::zeros(1, 1);
    t.points[0] = p;
    t.visibility[0] = 1.0;
    const std::vector<Pose> poses{Pose()};
    Observations o;
    o.n_tracks = o.n_frames = 1;
    o.pixels = {{0.5, 0.5}};
    o.weights = {0.7};
    o.static_mask = {1};
    o.targets = {Vec3(0.01, 0.01, 1.0)};
    return Tiny{g, t, o, CouplingState(g, t, poses)};
  }
};

}  // namespace

TEST(LossCons, HandDerivedSingleSample) {
  const Vec3 p(0.013, 0.008, 1.02);
  Tiny f = Tiny::make(p);
  const Vec3 p_tilde = Vec3(0.01, 0.01, 1.01);  // mean of the four corners
  const Vec3 r = p - p_tilde;
  Tape tape(f.state.store());
  const double v = loss_cons(f.state, f.state, f.obs, context(0.05, kConsTerms, &tape));
  // Quadratic regime: w * (0.5|r|^2 + 0.5|r|^2).
  EXPECT_NEAR(v, 0.7 * r.squaredNorm(), 1e-16);
  const auto gt = tape.gradient(f.state.tracks_block());
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(gt[c], 0.7 * r[c], 1e-15);
  const auto gg = tape.gradient(f.state.grids_block());
  for (int corner = 0; corner < 4; ++corner)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(gg[3 * corner + c], -0.25 * 0.7 * r[c], 1e-15);
  EXPECT_TRUE(all_zero(tape.gradient(f.state.poses_block())));
}

TEST(LossCons, ConsistentStateIsZero) {
  Tiny f = Tiny::make(Vec3(0.01, 0.01, 1.01));
  Tape tape(f.state.store());
  EXPECT_EQ(loss_cons(f.state, f.state, f.obs, context(0.05, kConsTerms, &tape)), 0.0);
  EXPECT_EQ(tape.max_abs(), 0.0);
}

TEST(LossCons, ZeroWeightsGiveZero) {
  auto fx = make_gradcheck_fixture("random", 3);
  for (double& w : fx.supervised.weights) w = 0.0;
  TermStats stats;
  TermContext ctx = context(0.05, kConsTerms);
  ctx.stats = &stats;
  EXPECT_EQ(loss_cons(fx.state, fx.state, fx.supervised, ctx), 0.0);
  EXPECT_EQ(stats.count, 0u);
  EXPECT_EQ(stats.skipped, fx.supervised.weights.size());
}

TEST(Losses, MatchScalarOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (const char* kind : {"random", "dynamic", "selfsup"}) {
      auto fx = make_gradcheck_fixture(kind, seed);
      for (double delta : {0.05, 0.01}) {
        const auto sup = support::to_problem(fx.state, fx.supervised, delta);
        const auto ps = support::to_problem(fx.state, fx.pseudo, delta);
        EXPECT_LT(rel_diff(loss_cons(fx.state, fx.state, fx.supervised, context(delta, kConsTerms)), oracle::cons(sup)),
                  1e-12);
        for (bool gated : {true, false}) {
          EXPECT_LT(rel_diff(loss_cam(fx.state, fx.state, fx.supervised, CamTarget::kGroundTruth, gated,
                                      context(delta, kCamTerms)),
                             oracle::cam(sup, gated)),
                    1e-12);
          EXPECT_LT(rel_diff(loss_selfsup(fx.state, fx.state, fx.pseudo, gated, context(delta, kSelfsupTerms)),
                             oracle::selfsup(ps, gated)),
                    1e-12)
              << kind << seed;
        }
      }
    }
  }
}

TEST(Losses, RoutingZeroTests) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto fx = make_gradcheck_fixture("random", seed);
    const auto& s = fx.state;
    for (const auto& spec : gradcheck_terms()) {
      Tape tape(s.store());
      evaluate_term(spec, fx, s, s, &tape);
      const RoutingMask r = routing_of(spec.term);
      EXPECT_EQ(all_zero(tape.gradient(s.grids_block())), !r.to_pointmaps) << spec.name;
      EXPECT_EQ(all_zero(tape.gradient(s.tracks_block())), !r.to_tracks) << spec.name;
      EXPECT_EQ(all_zero(tape.gradient(s.poses_block())), !r.to_poses) << spec.name;
    }
  }
  EXPECT_TRUE(routing_of(kConsToPointmaps).to_pointmaps && !routing_of(kConsToPointmaps).to_tracks);
  EXPECT_TRUE(routing_of(kConsToTracks).to_tracks && !routing_of(kConsToTracks).to_pointmaps);
  EXPECT_TRUE(routing_of(kCamToPoses).to_poses && !routing_of(kCamToPoses).to_tracks);
  EXPECT_TRUE(routing_of(kCamToTracks).to_tracks && !routing_of(kCamToTracks).to_poses);
  const RoutingMask anchor = routing_of(kSelfsupAnchor);
  EXPECT_TRUE(anchor.to_poses && anchor.to_pointmaps && !anchor.to_tracks);
}

TEST(Losses, AnchorTermTouchesOnlyTheAnchorGrid) {
  auto fx = make_gradcheck_fixture("selfsup", 1);
  Tape tape(fx.state.store());
  loss_selfsup(fx.state, fx.state, fx.pseudo, true, context(0.05, kSelfsupAnchor, &tape));
  const auto g = tape.gradient(fx.state.grids_block());
  const int x = fx.pseudo.anchor;
  for (int t = 0; t < fx.state.n_frames(); ++t) {
    const auto first = g.begin() + fx.state.grid_offset(t);
    const bool zero = std::all_of(first, first + 3 * fx.state.width() * fx.state.height(),
                                  [](double v) { return v == 0.0; });
    EXPECT_EQ(zero, t != x) << t;
  }
  // The anchor pose itself never receives gradient from this term.
  const auto gp = tape.gradient(fx.state.poses_block());
  for (int c = 0; c < 6; ++c) EXPECT_EQ(gp[fx.state.pose_offset(x) + c], 0.0);
}

TEST(LossCam, AllDynamicGivesExactlyZeroPoseGradient) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto fx = make_gradcheck_fixture("random", seed);
    std::fill(fx.supervised.static_mask.begin(), fx.supervised.static_mask.end(), 0);
    for (CamTarget target : {CamTarget::kGroundTruth, CamTarget::kAnchorSample}) {
      Tape tape(fx.state.store());
      loss_cam(fx.state, fx.state, fx.supervised, target, true, context(0.05, kCamTerms, &tape));
      EXPECT_TRUE(all_zero(tape.gradient(fx.state.poses_block())));
      EXPECT_FALSE(all_zero(tape.gradient(fx.state.tracks_block())));
    }
  }
}

TEST(LossCam, GatingRemovesExactlyOneSample) {
  auto fx = make_gradcheck_fixture("random", 7);
  auto& obs = fx.supervised;
  std::size_t k = 0;
  while (!(obs.static_mask[k] && obs.weights[k] >= 1e-3 && k % obs.n_frames != 0)) ++k;

  Observations masked = obs;
  masked.static_mask[k] = 0;
  Observations dropped = obs;
  dropped.weights[k] = 0.0;
  auto pose_grad = [&](const Observations& o) {
    Tape tape(fx.state.store());
    loss_cam(fx.state, fx.state, o, CamTarget::kGroundTruth, true, context(0.05, kCamToPoses, &tape));
    const auto g = tape.gradient(fx.state.poses_block());
    return std::vector<double>(g.begin(), g.end());
  };
  const auto full = pose_grad(obs);
  const auto gated = pose_grad(masked);
  EXPECT_EQ(gated, pose_grad(dropped));  // bitwise: the sample simply disappears
  EXPECT_NE(gated, full);
}

TEST(LossCam, MissingTargetsThrow) {
  auto fx = make_gradcheck_fixture("random", 2);
  fx.supervised.targets.clear();
  try {
    loss_cam(fx.state, fx.state, fx.supervised, CamTarget::kGroundTruth, true, context(0.05, kCamTerms));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingTargets);
  }
  // The anchor-sample pose term needs no targets.
  EXPECT_NO_THROW(
      loss_cam(fx.state, fx.state, fx.supervised, CamTarget::kAnchorSample, true, context(0.05, kCamToPoses)));
}

TEST(LossCam, PoseGradientMatchesFiniteDifferencesOnStaticScene) {
  SceneConfig c = support::small_config(4);
  c.n_dynamic = 0;
  c.sigma_pointmap = c.sigma_track = 0.0;
  c.sigma_pose = 0.05;
  const SyntheticScene scene = generate(c);
  CouplingState state = initial_state(scene);
  const Observations obs = supervised_observations(scene, scene.default_tau());
  const CouplingState frozen = state;
  ParamStore& store = state.store();
  const LossFn loss = [&](Tape* tape) {
    return loss_cam(state, frozen, obs, CamTarget::kGroundTruth, true, context(0.05, kCamToPoses, tape));
  };
  std::vector<std::size_t> idx;
  for (std::size_t k = 6; k < store.size(state.poses_block()); ++k) idx.push_back(k);
  const FdResult r = finite_diff_check(loss, store, state.poses_block(), idx, 1e-5);
  EXPECT_LT(r.max_rel_error, 1e-5);
}

TEST(Losses, NonNegativeAndZeroOnlyAtConsistency) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto fx = make_gradcheck_fixture("random", seed);
    EXPECT_GT(loss_cons(fx.state, fx.state, fx.supervised, context(0.05, kConsTerms)), 0.0);
    EXPECT_GT(loss_cam(fx.state, fx.state, fx.supervised, CamTarget::kGroundTruth, true, context(0.05, kCamTerms)),
              0.0);
    EXPECT_GT(loss_selfsup(fx.state, fx.state, fx.pseudo, true, context(0.05, kSelfsupTerms)), 0.0);
    auto clean = make_gradcheck_fixture("noiseless", seed);
    EXPECT_LT(loss_cons(clean.state, clean.state, clean.supervised, context(0.05, kConsTerms)), 1e-25);
  }
}

TEST(TotalLoss, WeightedSumOfComponents) {
  auto fx = make_gradcheck_fixture("random", 5);
  LossConfig cfg;
  cfg.enable_selfsup = true;
  cfg.weight_cons = 0.3;
  cfg.weight_cam = 2.0;
  cfg.weight_selfsup = 0.7;
  const LossBreakdown b = total_loss(cfg, fx.state, &fx.supervised, &fx.pseudo, nullptr);
  EXPECT_GE(b.cons_value, 0.0);
  EXPECT_GE(b.cam_value, 0.0);
  EXPECT_GE(b.selfsup_value, 0.0);
  EXPECT_NEAR(b.total, 0.3 * b.cons_value + 2.0 * b.cam_value + 0.7 * b.selfsup_value, 1e-12 * b.total);

  LossConfig only_cons;
  only_cons.enable_cam = false;
  EXPECT_EQ(total_loss(only_cons, fx.state, &fx.supervised, nullptr, nullptr).total, b.cons_value);
  LossConfig only_cam;
  only_cam.enable_cons = false;
  EXPECT_EQ(total_loss(only_cam, fx.state, &fx.supervised, nullptr, nullptr).total, b.cam_value);

  // Weighted gradient equals the weighted sum of the separate gradients.
  Tape all(fx.state.store()), a(fx.state.store()), c(fx.state.store());
  total_loss(cfg, fx.state, &fx.supervised, &fx.pseudo, &all);
  loss_cons(fx.state, fx.state, fx.supervised, context(0.05, kConsTerms, &a));
  loss_cam(fx.state, fx.state, fx.supervised, CamTarget::kGroundTruth, true, context(0.05, kCamTerms, &c));
  Tape s(fx.state.store());
  loss_selfsup(fx.state, fx.state, fx.pseudo, true, context(0.05, kSelfsupTerms, &s));
  for (std::size_t blk = 0; blk < all.block_count(); ++blk) {
    const BlockId id{blk};
    for (std::size_t k = 0; k < all.gradient(id).size(); ++k) {
      const double expect = 0.3 * a.gradient(id)[k] + 2.0 * c.gradient(id)[k] + 0.7 * s.gradient(id)[k];
      EXPECT_NEAR(all.gradient(id)[k], expect, 1e-12 * std::max(1.0, std::abs(expect)));
    }
  }
}

TEST(TotalLoss, RejectsBadConfig) {
  auto fx = make_gradcheck_fixture("random", 5);
  LossConfig cfg;
  cfg.huber_delta = 0.0;
  EXPECT_THROW(total_loss(cfg, fx.state, &fx.supervised, nullptr, nullptr), Error);
  LossConfig ss;
  ss.enable_selfsup = true;
  EXPECT_THROW(total_loss(ss, fx.state, &fx.supervised, nullptr, nullptr), Error);
}

TEST(Losses, DeterministicBitwise) {
  auto fx = make_gradcheck_fixture("dynamic", 9);
  LossConfig cfg;
  cfg.enable_selfsup = true;
  Tape a(fx.state.store()), b(fx.state.store());
  const double va = total_loss(cfg, fx.state, &fx.supervised, &fx.pseudo, &a).total;
  const double vb = total_loss(cfg, fx.state, &fx.supervised, &fx.pseudo, &b).total;
  EXPECT_EQ(va, vb);
  for (std::size_t blk = 0; blk < a.block_count(); ++blk) {
    const auto ga = a.gradient(BlockId{blk}), gb = b.gradient(BlockId{blk});
    EXPECT_TRUE(std::equal(ga.begin(), ga.end(), gb.begin()));
  }
}

TEST(Losses, QuadraticRegimeScalesWithSquare) {
  auto fx = make_gradcheck_fixture("random", 11);
  const double delta = 10.0;  // everything quadratic
  const double s = 2.0;

  std::vector<PointMapGrid> grids = fx.state.export_grids();
  for (auto& g : grids)
    for (double& v : g.values()) v *= s;
  TrackSet tracks = fx.scene.estimates.tracks;
  tracks.points = fx.state.export_track_points();
  for (auto& p : tracks.points) p *= s;
  std::vector<Pose> poses;
  for (const Pose& p : fx.state.relative_poses()) poses.emplace_back(p.rotation(), s * p.translation());
  const CouplingState scaled(grids, tracks, poses);
  Observations obs = fx.supervised;
  for (auto& t : obs.targets) t *= s;

  const double base_cons = loss_cons(fx.state, fx.state, fx.supervised, context(delta, kConsTerms));
  const double base_cam =
      loss_cam(fx.state, fx.state, fx.supervised, CamTarget::kGroundTruth, true, context(delta, kCamTerms));
  EXPECT_LT(rel_diff(loss_cons(scaled, scaled, fx.supervised, context(s * delta, kConsTerms)), s * s * base_cons),
            1e-12);
  EXPECT_LT(rel_diff(loss_cam(scaled, scaled, obs, CamTarget::kGroundTruth, true, context(s * delta, kCamTerms)),
                     s * s * base_cam),
            1e-12);
}

TEST(LossSelfsup, ZeroOnConsistentStateAndNeedsNoTargets) {
  SceneConfig c = support::small_config(2);
  c.n_dynamic = 0;
  c.sigma_pointmap = c.sigma_track = c.sigma_pose = 0.0;
  const SyntheticScene scene = generate(c);
  const CouplingState state = initial_state(scene);
  Observations pseudo = pseudo_observations(scene);
  ASSERT_FALSE(pseudo.has_targets());
  Tape tape(state.store());
  EXPECT_LT(loss_selfsup(state, state, pseudo, true, context(0.05, kSelfsupTerms, &tape)), 1e-25);
  EXPECT_LT(tape.max_abs(), 1e-12);
}

TEST(LossSelfsup, PoseGradientPointsTowardTruth) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SceneConfig c = support::small_config(100 + seed);
    c.n_dynamic = 0;
    c.sigma_pointmap = c.sigma_track = 0.0;
    c.sigma_pose = 0.05;
    const SyntheticScene scene = generate(c);
    const CouplingState state = initial_state(scene);
    const Observations pseudo = pseudo_observations(scene);
    const Observations sup = supervised_observations(scene, scene.default_tau());

    Tape self(state.store()), cam(state.store());
    loss_selfsup(state, state, pseudo, true, context(0.05, kSelfsupAnchor, &self));
    loss_cam(state, state, sup, CamTarget::kGroundTruth, true, context(0.05, kCamToPoses, &cam));
    const auto gs = self.gradient(state.poses_block());
    const auto gc = cam.gradient(state.poses_block());
    const auto gt_rel = scene.gt_relative_poses();
    double toward = 0.0, agree = 0.0;
    for (int t = 0; t < state.n_frames(); ++t) {
      if (t == scene.anchor()) continue;
      // Left correction taking the estimate onto the truth.
      const Vec6 xi = log_map(gt_rel[t] * state.relative_pose(t).inverse()).stacked();
      for (int j = 0; j < 6; ++j) {
        toward += -gs[state.pose_offset(t) + j] * xi[j];
        agree += gs[state.pose_offset(t) + j] * gc[state.pose_offset(t) + j];
      }
    }
    EXPECT_GT(toward, 0.0) << seed;
    EXPECT_GT(agree, 0.0) << seed;
  }
}

TEST(SelfsupMask, StaticCleanSceneIsAllStatic) {
  SceneConfig c = support::small_config(3);
  c.n_dynamic = 0;
  c.sigma_pointmap = c.sigma_track = c.sigma_pose = 0.0;
  const SyntheticScene scene = generate(c);
  const auto pseudo = pseudo_observations(scene);
  const auto m = selfsup_static_mask(initial_state(scene), pseudo, scene.default_tau());
  for (std::size_t k = 0; k < m.size(); ++k) EXPECT_EQ(m[k], pseudo.weights[k] >= 1e-3 ? 1 : 0);
}

TEST(SelfsupMask, FlagsMovingTracks) {
  SceneConfig c = support::small_config(4);
  c.n_static = 6;
  c.n_dynamic = 6;
  c.motion_speed = 0.05;
  c.sigma_pointmap = c.sigma_track = c.sigma_pose = 0.0;
  const SyntheticScene scene = generate(c);
  const auto pseudo = pseudo_observations(scene);
  const auto m = selfsup_static_mask(initial_state(scene), pseudo, scene.default_tau());
  const auto gt = supervised_observations(scene, scene.default_tau()).static_mask;
  int agree = 0, total = 0;
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (pseudo.weights[k] < 1e-3) continue;
    agree += m[k] == gt[k];
    ++total;
  }
  // Clean poses: the reprojection test sees the true displacements.
  EXPECT_EQ(agree, total);
}
