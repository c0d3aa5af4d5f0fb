#include "trackcouple/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "trackcouple/error.hpp"
#include "trackcouple/point_index.hpp"

namespace trackcouple {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

double vector_angle_deg(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b)) * kRadToDeg;
}

// Angle of a^T b from the chordal distance |a - b|_F = 2 sqrt(2) sin(theta / 2):
// well conditioned at small angles and exactly zero for identical inputs.
double rotation_distance_deg(const Mat3& a, const Mat3& b) {
  const double chord = (a - b).norm() / (2.0 * std::numbers::sqrt2);
  return 2.0 * std::asin(std::min(1.0, chord)) * kRadToDeg;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

void check_lengths(const std::vector<Pose>& est, const std::vector<Pose>& gt) {
  if (est.size() != gt.size()) {
    throw Error(ErrorCode::kConfigInvalid, "estimated and GT trajectories differ in length");
  }
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double ate_positions(std::span<const Vec3> est, std::span<const Vec3> gt, bool with_scale) {
  if (est.size() != gt.size()) throw Error(ErrorCode::kConfigInvalid, "trajectories differ in length");
  if (est.size() < 3) throw Error(ErrorCode::kDegenerateConfiguration, "ATE needs at least three poses");
  const Similarity s = umeyama(est, gt, with_scale);
  double sq = 0.0;
  for (std::size_t k = 0; k < est.size(); ++k) sq += (gt[k] - s * est[k]).squaredNorm();
  return std::sqrt(sq / static_cast<double>(est.size()));
}

double ate(const std::vector<Pose>& est, const std::vector<Pose>& gt, bool with_scale) {
  check_lengths(est, gt);
  std::vector<Vec3> a, b;
  for (std::size_t k = 0; k < est.size(); ++k) {
    a.push_back(est[k].translation());
    b.push_back(gt[k].translation());
  }
  return ate_positions(a, b, with_scale);
}

RpeResult rpe(const std::vector<Pose>& est, const std::vector<Pose>& gt, int step) {
  check_lengths(est, gt);
  if (step < 1 || step >= static_cast<int>(est.size())) {
    throw Error(ErrorCode::kConfigInvalid, "RPE step must lie in [1, T)");
  }
  RpeResult r;
  double sq_t = 0.0, sq_r = 0.0;
  for (std::size_t i = 0; i + step < est.size(); ++i) {
    const Pose rel_gt = gt[i].inverse() * gt[i + step];
    const Pose rel_est = est[i].inverse() * est[i + step];
    // rel_gt^-1 * rel_est, arranged so identical inputs give exactly zero.
    const Mat3 r_gt_t = rel_gt.rotation().transpose();
    const Vec3 dt = r_gt_t * (rel_est.translation() - rel_gt.translation());
    sq_t += dt.squaredNorm();
    const double ang = rotation_distance_deg(rel_gt.rotation(), rel_est.rotation());
    sq_r += ang * ang;
    ++r.pairs;
  }
  r.trans = std::sqrt(sq_t / r.pairs);
  r.rot_deg = std::sqrt(sq_r / r.pairs);
  return r;
}

std::vector<PairError> pair_errors(const std::vector<Pose>& est, const std::vector<Pose>& gt, int* skipped) {
  check_lengths(est, gt);
  std::vector<PairError> out;
  int skip = 0;
  for (int i = 0; i < static_cast<int>(est.size()); ++i) {
    for (int j = i + 1; j < static_cast<int>(est.size()); ++j) {
      const Pose rel_est = relative_pose(est[i], est[j]);
      const Pose rel_gt = relative_pose(gt[i], gt[j]);
      if (rel_est.translation().norm() < 1e-9 || rel_gt.translation().norm() < 1e-9) {
        ++skip;
        continue;
      }
      PairError e;
      e.i = i;
      e.j = j;
      e.rot_deg = rotation_distance_deg(rel_gt.rotation(), rel_est.rotation());
      e.trans_deg = vector_angle_deg(rel_est.translation(), rel_gt.translation());
      out.push_back(e);
    }
  }
  if (skipped) *skipped = skip;
  return out;
}

RelPoseAccuracy rel_pose_accuracy(const std::vector<Pose>& est, const std::vector<Pose>& gt,
                                  int max_threshold_deg) {
  if (est.size() < 2) throw Error(ErrorCode::kDegenerateConfiguration, "need at least two frames");
  if (max_threshold_deg < 2) throw Error(ErrorCode::kConfigInvalid, "threshold must be at least 2 degrees");
  RelPoseAccuracy r;
  const auto errors = pair_errors(est, gt, &r.skipped);
  r.pairs = static_cast<int>(errors.size());
  if (errors.empty()) throw Error(ErrorCode::kDegenerateConfiguration, "every frame pair has a zero baseline");

  const auto accuracy = [&](double tau) {
    int rot = 0, trans = 0;
    for (const auto& e : errors) {
      rot += e.rot_deg < tau;
      trans += e.trans_deg < tau;
    }
    return std::pair<double, double>{100.0 * rot / r.pairs, 100.0 * trans / r.pairs};
  };
  const auto [rra, rta] = accuracy(max_threshold_deg);
  r.rra = rra;
  r.rta = rta;
  double area = 0.0;
  double prev = 0.0;
  for (int tau = 1; tau <= max_threshold_deg; ++tau) {
    const auto [a, b] = accuracy(tau);
    const double cur = std::min(a, b);
    if (tau > 1) area += 0.5 * (prev + cur);
    prev = cur;
  }
  r.auc = area / (max_threshold_deg - 1);
  return r;
}

TapvidResult tapvid3d_metrics(const TrackSet& est, const TrackSet& gt, const TapvidOptions& options) {
  if (est.n_tracks != gt.n_tracks || est.n_frames != gt.n_frames || est.points.size() != gt.points.size() ||
      est.visibility.size() != gt.visibility.size()) {
    throw Error(ErrorCode::kConfigInvalid, "estimated and GT tracks differ in shape");
  }
  if (options.thresholds.empty() || !(options.focal > 0.0)) {
    throw Error(ErrorCode::kConfigInvalid, "tapvid thresholds must be non-empty and focal positive");
  }
  const double cut = options.visibility_cutoff;
  const std::size_t n = gt.points.size();
  std::size_t gt_visible = 0, agree = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const bool gv = gt.visibility[k] >= cut;
    const bool pv = est.visibility[k] >= cut;
    gt_visible += gv;
    agree += gv == pv;
  }
  if (gt_visible == 0) throw Error(ErrorCode::kEmptyValidMask, "no visible GT track point");

  TapvidResult r;
  for (double thr_px : options.thresholds) {
    std::size_t within = 0, tp = 0, fp = 0, fn = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const bool gv = gt.visibility[k] >= cut;
      const bool pv = est.visibility[k] >= cut;
      const double thr = thr_px * std::abs(gt.points[k].z()) / options.focal;
      const bool close = gv && (est.points[k] - gt.points[k]).norm() < thr;
      within += close;
      if (pv && close) {
        ++tp;
      } else {
        if (pv) ++fp;
        if (gv) ++fn;
      }
    }
    r.apd += static_cast<double>(within) / static_cast<double>(gt_visible);
    r.aj += static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
  }
  const double m = static_cast<double>(options.thresholds.size());
  r.apd *= 100.0 / m;
  r.aj *= 100.0 / m;
  r.oa = 100.0 * static_cast<double>(agree) / static_cast<double>(n);
  return r;
}

std::vector<Vec3> estimate_normals(std::span<const Vec3> points, int k) {
  if (points.size() < 3) throw Error(ErrorCode::kDegenerateConfiguration, "normals need at least three points");
  const PointIndex index(points);
  const std::size_t kk = std::min<std::size_t>(std::max(k, 3), points.size());
  std::vector<Vec3> normals(points.size());
  for (std::size_t p = 0; p < points.size(); ++p) {
    const auto nb = index.k_nearest(points[p], kk);
    Vec3 c = Vec3::Zero();
    for (const auto& q : nb) c += points[q.index];
    c /= static_cast<double>(nb.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& q : nb) {
      const Vec3 d = points[q.index] - c;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    normals[p] = es.eigenvectors().col(0).normalized();
  }
  return normals;
}

PointmapMetrics pointmap_metrics(std::span<const Vec3> pred, std::span<const Vec3> gt,
                                 const PointmapMetricOptions& options) {
  if (pred.empty() || gt.empty()) throw Error(ErrorCode::kDegenerateConfiguration, "empty point cloud");
  std::vector<Vec3> aligned(pred.begin(), pred.end());
  if (options.align) {
    if (pred.size() != gt.size()) {
      throw Error(ErrorCode::kConfigInvalid, "alignment needs index-matched clouds of equal size");
    }
    Similarity s = umeyama(pred, gt, options.with_scale);
    if (options.use_icp) s = icp_refine(pred, gt, s).transform;
    for (Vec3& p : aligned) p = s * p;
  }

  const PointIndex gt_index(gt);
  const PointIndex pred_index(aligned);
  std::vector<double> acc(aligned.size()), comp(gt.size());
  std::vector<std::size_t> acc_nn(aligned.size()), comp_nn(gt.size());
  for (std::size_t k = 0; k < aligned.size(); ++k) {
    const Neighbor nb = gt_index.nearest(aligned[k]);
    acc[k] = std::sqrt(nb.squared_distance);
    acc_nn[k] = nb.index;
  }
  for (std::size_t k = 0; k < gt.size(); ++k) {
    const Neighbor nb = pred_index.nearest(gt[k]);
    comp[k] = std::sqrt(nb.squared_distance);
    comp_nn[k] = nb.index;
  }

  PointmapMetrics m;
  m.acc_mean = mean(acc);
  m.acc_median = median(acc);
  m.comp_mean = mean(comp);
  m.comp_median = median(comp);

  if (aligned.size() >= 3 && gt.size() >= 3) {
    const auto n_pred = estimate_normals(aligned, options.normal_neighbors);
    const auto n_gt = estimate_normals(gt, options.normal_neighbors);
    std::vector<double> nc_a(aligned.size()), nc_c(gt.size());
    for (std::size_t k = 0; k < aligned.size(); ++k) nc_a[k] = std::min(1.0, std::abs(n_pred[k].dot(n_gt[acc_nn[k]])));
    for (std::size_t k = 0; k < gt.size(); ++k) nc_c[k] = std::min(1.0, std::abs(n_gt[k].dot(n_pred[comp_nn[k]])));
    m.nc_mean = 0.5 * (mean(nc_a) + mean(nc_c));
    m.nc_median = 0.5 * (median(nc_a) + median(nc_c));
  } else {
    m.nc_mean = m.nc_median = 1.0;
  }
  return m;
}

namespace {

struct Fit {
  double scale = 1.0;
  double shift = 0.0;
};

Fit fit_depth(const std::vector<double>& p, const std::vector<double>& g, const DepthOptions& o) {
  Fit f;
  if (o.alignment == DepthAlignment::kScaleShift) {
    const double n = static_cast<double>(p.size());
    double sp = 0, sg = 0, spp = 0, spg = 0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      sp += p[k];
      sg += g[k];
      spp += p[k] * p[k];
      spg += p[k] * g[k];
    }
    const double det = n * spp - sp * sp;
    if (std::abs(det) <= 1e-300) {
      // Constant prediction: the best affine fit is the mean GT depth.
      f.scale = 0.0;
      f.shift = sg / n;
    } else {
      f.scale = (n * spg - sp * sg) / det;
      f.shift = (sg - f.scale * sp) / n;
    }
  } else if (o.least_squares_scale) {
    double spp = 0, spg = 0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      spp += p[k] * p[k];
      spg += p[k] * g[k];
    }
    if (spp <= 0.0) throw Error(ErrorCode::kEmptyValidMask, "all predicted depths are zero");
    f.scale = spg / spp;
  } else {
    std::vector<double> ratios;
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (p[k] > 0.0) ratios.push_back(g[k] / p[k]);
    }
    if (ratios.empty()) throw Error(ErrorCode::kEmptyValidMask, "no positive predicted depth");
    f.scale = median(std::move(ratios));
  }
  return f;
}

// Sums over one alignment group.
void score(const std::vector<double>& p, const std::vector<double>& g, const Fit& f, double& abs_rel,
           double& delta) {
  abs_rel = 0.0;
  delta = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double a = f.scale * p[k] + f.shift;
    abs_rel += std::abs(a - g[k]) / g[k];
    if (a > 0.0 && std::max(a / g[k], g[k] / a) < 1.25) delta += 1.0;
  }
}

}  // namespace

DepthMetrics depth_metrics(const std::vector<std::vector<double>>& pred,
                           const std::vector<std::vector<double>>& gt,
                           const std::vector<std::vector<std::uint8_t>>& valid, const DepthOptions& options) {
  if (pred.size() != gt.size() || (!valid.empty() && valid.size() != gt.size())) {
    throw Error(ErrorCode::kConfigInvalid, "depth image counts differ");
  }
  std::vector<std::vector<double>> ps(gt.size()), gs(gt.size());
  std::size_t total = 0;
  for (std::size_t im = 0; im < gt.size(); ++im) {
    if (pred[im].size() != gt[im].size() || (!valid.empty() && valid[im].size() != gt[im].size())) {
      throw Error(ErrorCode::kConfigInvalid, "depth image " + std::to_string(im) + " differs in size");
    }
    for (std::size_t k = 0; k < gt[im].size(); ++k) {
      const bool ok = (valid.empty() || valid[im][k]) && gt[im][k] > 0.0 && std::isfinite(gt[im][k]) &&
                      std::isfinite(pred[im][k]);
      if (!ok) continue;
      ps[im].push_back(pred[im][k]);
      gs[im].push_back(gt[im][k]);
    }
    total += gs[im].size();
  }
  if (total == 0) throw Error(ErrorCode::kEmptyValidMask, "no valid depth pixel");

  DepthMetrics m;
  if (options.grouping == DepthGrouping::kPerSequence) {
    std::vector<double> p, g;
    for (std::size_t im = 0; im < gt.size(); ++im) {
      p.insert(p.end(), ps[im].begin(), ps[im].end());
      g.insert(g.end(), gs[im].begin(), gs[im].end());
    }
    double a = 0, d = 0;
    score(p, g, fit_depth(p, g, options), a, d);
    m.abs_rel = a / static_cast<double>(p.size());
    m.delta1 = d / static_cast<double>(p.size());
  } else {
    int images = 0;
    for (std::size_t im = 0; im < gt.size(); ++im) {
      if (gs[im].empty()) continue;
      double a = 0, d = 0;
      score(ps[im], gs[im], fit_depth(ps[im], gs[im], options), a, d);
      m.abs_rel += a / static_cast<double>(gs[im].size());
      m.delta1 += d / static_cast<double>(gs[im].size());
      ++images;
    }
    m.abs_rel /= images;
    m.delta1 /= images;
  }
  return m;
}

std::vector<double> depth_from_pointmap(const PointMapGrid& grid) {
  std::vector<double> d(grid.pixel_count());
  const auto v = grid.values();
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = v[3 * k + 2];
  return d;
}

}  // namespace trackcouple
