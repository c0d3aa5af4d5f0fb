#include "trackcouple/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "trackcouple/error.hpp"

namespace trackcouple {

const std::vector<std::string>& gradcheck_fixture_kinds() {
  static const std::vector<std::string> kinds{"random", "noiseless", "kink", "dynamic", "selfsup"};
  return kinds;
}

const std::vector<TermSpec>& gradcheck_terms() {
  static const std::vector<TermSpec> terms{
      {kConsToPointmaps, CamTarget::kGroundTruth, "cons.pointmaps"},
      {kConsToTracks, CamTarget::kGroundTruth, "cons.tracks"},
      {kCamToPoses, CamTarget::kGroundTruth, "cam.poses"},
      {kCamToPoses, CamTarget::kAnchorSample, "cam.poses.anchor_sample"},
      {kCamToTracks, CamTarget::kGroundTruth, "cam.tracks"},
      {kSelfsupConsToPointmaps, CamTarget::kGroundTruth, "selfsup.cons.pointmaps"},
      {kSelfsupConsToTracks, CamTarget::kGroundTruth, "selfsup.cons.tracks"},
      {kSelfsupAnchor, CamTarget::kGroundTruth, "selfsup.anchor"},
  };
  return terms;
}

GradcheckFixture make_gradcheck_fixture(const std::string& kind, std::uint64_t seed) {
  SceneConfig c;
  c.n_frames = 4;
  c.n_static = 6;
  c.n_dynamic = 4;
  c.width = 8;
  c.height = 8;
  c.occlusion_every = 3;
  c.occlusion_length = 1;
  c.sigma_pointmap = 0.01;
  c.sigma_track = 0.02;
  c.sigma_pose = 0.05;
  c.seed = seed;
  if (kind == "noiseless") {
    c.sigma_pointmap = c.sigma_track = c.sigma_pose = 0.0;
  } else if (kind == "dynamic") {
    c.n_static = 5;
    c.n_dynamic = 5;
  } else if (kind == "selfsup") {
    c.n_static = 10;
    c.n_dynamic = 0;
  } else if (kind != "random" && kind != "kink") {
    throw Error(ErrorCode::kConfigInvalid, "fixture: unknown kind '" + kind + "'");
  }

  SyntheticScene scene = generate(c);
  CouplingState state = initial_state(scene);
  Observations sup = supervised_observations(scene, scene.default_tau());
  Observations pseudo = pseudo_observations(scene);

  // Fractional weights and a mixed self-supervised mask widen coverage.
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (kind != "noiseless") {
    for (double& w : sup.weights) w *= 0.3 + 0.7 * unit(rng);
    for (double& w : pseudo.weights) w *= 0.3 + 0.7 * unit(rng);
    for (auto& m : pseudo.static_mask) m = unit(rng) < 0.7 ? 1 : 0;
  }

  GradcheckFixture f{kind, seed, std::move(scene), std::move(state), std::move(sup), std::move(pseudo), 0.05};
  if (kind == "kink") {
    // Put delta exactly on the first consistency residual.
    for (std::size_t k = 0; k < f.supervised.weights.size(); ++k) {
      if (f.supervised.weights[k] < 1e-3) continue;
      const int i = static_cast<int>(k) / f.supervised.n_frames;
      const int t = static_cast<int>(k) % f.supervised.n_frames;
      const Vec3 r = f.state.track_point(i, t) - sample(f.state.grid(t), f.supervised.pixels[k]);
      if (r.norm() > 0.0) {
        f.huber_delta = r.norm();
        break;
      }
    }
  }
  return f;
}

double evaluate_term(const TermSpec& spec, const GradcheckFixture& fixture, const CouplingState& live,
                     const CouplingState& detached, Tape* tape) {
  TermContext ctx;
  ctx.huber_delta = fixture.huber_delta;
  ctx.terms = spec.term;
  ctx.tape = tape;
  if (spec.term & kConsTerms) return loss_cons(live, detached, fixture.supervised, ctx);
  if (spec.term & kCamTerms) return loss_cam(live, detached, fixture.supervised, spec.target, true, ctx);
  return loss_selfsup(live, detached, fixture.pseudo, true, ctx);
}

std::vector<GradcheckRow> run_gradcheck(GradcheckFixture& fixture, const GradcheckOptions& options) {
  std::vector<GradcheckRow> rows;
  CouplingState& live = fixture.state;
  const CouplingState detached = live;  // frozen values behind every stop-gradient
  ParamStore& store = live.store();

  for (const TermSpec& spec : gradcheck_terms()) {
    const RoutingMask routing = routing_of(spec.term);
    const LossFn loss = [&](Tape* tape) { return evaluate_term(spec, fixture, live, detached, tape); };
    Tape tape(store);
    loss(&tape);

    for (std::size_t b = 0; b < store.block_count(); ++b) {
      const BlockId block{b};
      GradcheckRow row;
      row.fixture = fixture.kind + "#" + std::to_string(fixture.seed);
      row.term = spec.name;
      row.block = store.name(block);
      row.routed = routing.admits(store.role(block));
      const auto grad = tape.gradient(block);
      for (double g : grad) row.max_analytic = std::max(row.max_analytic, std::abs(g));

      if (!row.routed) {
        row.samples = grad.size();
        row.pass = std::all_of(grad.begin(), grad.end(), [](double g) { return g == 0.0; });
        row.max_abs_error = row.max_analytic;
        row.max_rel_error = row.pass ? 0.0 : 1.0;
        rows.push_back(row);
        continue;
      }

      // Evenly spread nonzero entries plus a couple of untouched ones.
      std::vector<std::size_t> nonzero, zero;
      for (std::size_t k = 0; k < grad.size(); ++k) (grad[k] != 0.0 ? nonzero : zero).push_back(k);
      std::vector<std::size_t> indices;
      const std::size_t take = std::min(options.max_samples, nonzero.size());
      for (std::size_t s = 0; s < take; ++s) indices.push_back(nonzero[s * nonzero.size() / take]);
      for (std::size_t s = 0; s < std::min<std::size_t>(2, zero.size()); ++s) {
        indices.push_back(zero[s * zero.size() / 2]);
      }

      FdOptions fd;
      fd.corruption = options.corruption;
      const FdResult res = finite_diff_check(loss, store, block, indices, options.h, fd);
      row.samples = indices.size();
      row.max_rel_error = res.max_rel_error;
      row.max_abs_error = res.max_abs_error;
      row.pass = res.max_rel_error <= options.tol;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace trackcouple
