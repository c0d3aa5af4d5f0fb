#pragma once

// Shared fixtures: small synthetic scenes and their conversion into the
// plain-array form the loss oracle understands.

#include <vector>

#include "oracles/naive_losses.hpp"
#include "trackcouple/coupling.hpp"
#include "trackcouple/synthetic.hpp"

namespace support {

inline trackcouple::SceneConfig small_config(std::uint64_t seed) {
  trackcouple::SceneConfig c;
  c.n_frames = 5;
  c.n_static = 8;
  c.n_dynamic = 4;
  c.width = 10;
  c.height = 10;
  c.occlusion_every = 3;
  c.occlusion_length = 1;
  c.seed = seed;
  return c;
}

inline oracle::Problem to_problem(const trackcouple::CouplingState& s, const trackcouple::Observations& obs,
                                  double delta) {
  oracle::Problem q;
  q.n = obs.n_tracks;
  q.t = obs.n_frames;
  q.anchor = obs.anchor;
  q.delta = delta;
  for (int t = 0; t < s.n_frames(); ++t) {
    oracle::Grid g{s.width(), s.height(), {}};
    for (int y = 0; y < s.height(); ++y)
      for (int x = 0; x < s.width(); ++x) g.p.push_back(s.grid(t).at(x, y));
    q.grids.push_back(std::move(g));
    q.rel.push_back(s.relative_pose(t).matrix());
  }
  for (int i = 0; i < q.n; ++i)
    for (int t = 0; t < q.t; ++t) {
      const auto k = obs.index(i, t);
      q.tracks.push_back(s.track_point(i, t));
      q.px.push_back(obs.pixels[k].x);
      q.py.push_back(obs.pixels[k].y);
      q.w.push_back(obs.weights[k]);
      q.m.push_back(obs.static_mask[k]);
      if (obs.has_targets()) q.targets.push_back(obs.targets[k]);
    }
  return q;
}

inline bool all_zero(std::span<const double> g) {
  for (double v : g)
    if (v != 0.0) return false;
  return true;
}

}  // namespace support
