#pragma once

// Naive reference implementations of the evaluation metrics: explicit loops,
// linear-scan nearest neighbours, Horn alignment, 4x4 homogeneous poses.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "horn_alignment.hpp"
#include "matrix_se3.hpp"

namespace oracle {

constexpr double kDeg = 180.0 / std::numbers::pi;

inline double naive_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) return 0.0;
  if (n % 2 == 1) return v[(n - 1) / 2];
  return (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

inline double naive_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double naive_ate(const std::vector<M4>& est, const std::vector<M4>& gt) {
  std::vector<V3> a, b;
  for (std::size_t k = 0; k < est.size(); ++k) {
    a.push_back(est[k].topRightCorner<3, 1>());
    b.push_back(gt[k].topRightCorner<3, 1>());
  }
  const HornResult h = horn(a, b, true);
  double sq = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) sq += (b[k] - h * a[k]).squaredNorm();
  return std::sqrt(sq / static_cast<double>(a.size()));
}

struct NaiveRpe {
  double trans = 0.0, rot_deg = 0.0;
};
inline NaiveRpe naive_rpe(const std::vector<M4>& est, const std::vector<M4>& gt, int step) {
  double st = 0.0, sr = 0.0;
  int n = 0;
  for (std::size_t i = 0; i + step < est.size(); ++i) {
    const M4 rg = gt[i].inverse() * gt[i + step];
    const M4 re = est[i].inverse() * est[i + step];
    const M4 e = rg.inverse() * re;
    st += e.topRightCorner<3, 1>().squaredNorm();
    const double a = angle(e.topLeftCorner<3, 3>()) * kDeg;
    sr += a * a;
    ++n;
  }
  return {std::sqrt(st / n), std::sqrt(sr / n)};
}

struct NaiveRelPose {
  double rra = 0.0, rta = 0.0, auc = 0.0;
  int pairs = 0;
};
// Pair (i, j) compares C_j^-1 C_i; thresholds are strict.
inline NaiveRelPose naive_rel_pose(const std::vector<M4>& est, const std::vector<M4>& gt, int max_deg) {
  std::vector<double> rot, trans;
  for (std::size_t i = 0; i < est.size(); ++i) {
    for (std::size_t j = i + 1; j < est.size(); ++j) {
      const M4 re = est[j].inverse() * est[i];
      const M4 rg = gt[j].inverse() * gt[i];
      const V3 te = re.topRightCorner<3, 1>(), tg = rg.topRightCorner<3, 1>();
      if (te.norm() < 1e-9 || tg.norm() < 1e-9) continue;
      rot.push_back(angle(rg.topLeftCorner<3, 3>().transpose() * re.topLeftCorner<3, 3>()) * kDeg);
      trans.push_back(std::atan2(te.cross(tg).norm(), te.dot(tg)) * kDeg);
    }
  }
  NaiveRelPose r;
  r.pairs = static_cast<int>(rot.size());
  auto frac = [&](const std::vector<double>& e, double tau) {
    int c = 0;
    for (double x : e) c += x < tau ? 1 : 0;
    return 100.0 * c / static_cast<double>(e.size());
  };
  r.rra = frac(rot, max_deg);
  r.rta = frac(trans, max_deg);
  // Trapezoid weights: half at both ends, one inside.
  double s = 0.0;
  for (int tau = 1; tau <= max_deg; ++tau) {
    const double w = (tau == 1 || tau == max_deg) ? 0.5 : 1.0;
    s += w * std::min(frac(rot, tau), frac(trans, tau));
  }
  r.auc = s / (max_deg - 1);
  return r;
}

struct NaiveTapvid {
  double aj = 0.0, apd = 0.0, oa = 0.0;
};
// Cells are enumerated per (track, frame, threshold).
inline NaiveTapvid naive_tapvid(int n_tracks, int n_frames, const std::vector<V3>& est_p,
                                const std::vector<double>& est_v, const std::vector<V3>& gt_p,
                                const std::vector<double>& gt_v, const std::vector<double>& thresholds,
                                double focal) {
  NaiveTapvid r;
  double occ_ok = 0, cells = 0;
  for (int i = 0; i < n_tracks; ++i) {
    for (int t = 0; t < n_frames; ++t) {
      const int k = i * n_frames + t;
      occ_ok += ((gt_v[k] >= 0.5) == (est_v[k] >= 0.5)) ? 1 : 0;
      cells += 1;
    }
  }
  r.oa = 100.0 * occ_ok / cells;
  for (double thr : thresholds) {
    double vis = 0, near = 0, tp = 0, fp = 0, fn = 0;
    for (int i = 0; i < n_tracks; ++i) {
      for (int t = 0; t < n_frames; ++t) {
        const int k = i * n_frames + t;
        const bool g = gt_v[k] >= 0.5, p = est_v[k] >= 0.5;
        const bool d = (est_p[k] - gt_p[k]).norm() < thr * std::abs(gt_p[k].z()) / focal;
        if (g) vis += 1;
        if (g && d) near += 1;
        if (g && d && p) tp += 1;
        if (p && !(g && d)) fp += 1;
        if (g && !(d && p)) fn += 1;
      }
    }
    r.apd += near / vis;
    r.aj += tp / (tp + fp + fn);
  }
  r.apd *= 100.0 / thresholds.size();
  r.aj *= 100.0 / thresholds.size();
  return r;
}

// Linear-scan nearest neighbour; ties go to the lower index.
inline std::size_t brute_nearest(const std::vector<V3>& cloud, const V3& q, double* dist = nullptr) {
  std::size_t best = 0;
  double bd = (cloud[0] - q).squaredNorm();
  for (std::size_t k = 1; k < cloud.size(); ++k) {
    const double d = (cloud[k] - q).squaredNorm();
    if (d < bd) {
      bd = d;
      best = k;
    }
  }
  if (dist) *dist = std::sqrt(bd);
  return best;
}

inline std::vector<std::size_t> brute_knn(const std::vector<V3>& cloud, const V3& q, std::size_t k) {
  std::vector<std::size_t> idx(cloud.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return (cloud[a] - q).squaredNorm() < (cloud[b] - q).squaredNorm();
  });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

inline std::vector<V3> brute_normals(const std::vector<V3>& cloud, std::size_t k) {
  std::vector<V3> out;
  for (const V3& p : cloud) {
    const auto nb = brute_knn(cloud, p, std::max<std::size_t>(k, 3));
    V3 c = V3::Zero();
    for (auto j : nb) c += cloud[j];
    c /= static_cast<double>(nb.size());
    M3 cov = M3::Zero();
    for (auto j : nb) cov += (cloud[j] - c) * (cloud[j] - c).transpose();
    Eigen::SelfAdjointEigenSolver<M3> es(cov);
    out.push_back(es.eigenvectors().col(0).normalized());
  }
  return out;
}

struct NaivePointmap {
  double acc_mean, acc_median, comp_mean, comp_median, nc_mean, nc_median;
};
inline NaivePointmap naive_pointmap(std::vector<V3> pred, const std::vector<V3>& gt, bool align,
                                    std::size_t k = 16) {
  if (align) {
    const HornResult h = horn(pred, gt, true);
    for (V3& p : pred) p = h * p;
  }
  std::vector<double> acc, comp, nca, ncc;
  const auto np = brute_normals(pred, k), ng = brute_normals(gt, k);
  for (std::size_t a = 0; a < pred.size(); ++a) {
    double d;
    const std::size_t j = brute_nearest(gt, pred[a], &d);
    acc.push_back(d);
    nca.push_back(std::min(1.0, std::abs(np[a].dot(ng[j]))));
  }
  for (std::size_t b = 0; b < gt.size(); ++b) {
    double d;
    const std::size_t j = brute_nearest(pred, gt[b], &d);
    comp.push_back(d);
    ncc.push_back(std::min(1.0, std::abs(ng[b].dot(np[j]))));
  }
  return {naive_mean(acc),
          naive_median(acc),
          naive_mean(comp),
          naive_median(comp),
          (naive_mean(nca) + naive_mean(ncc)) / 2.0,
          (naive_median(nca) + naive_median(ncc)) / 2.0};
}

struct NaiveDepth {
  double abs_rel = 0.0, delta1 = 0.0;
};
// One alignment group: median-ratio scale, or least-squares scale and shift.
inline NaiveDepth naive_depth_group(const std::vector<double>& p, const std::vector<double>& g, bool shift) {
  double s = 1.0, b = 0.0;
  if (shift) {
    Eigen::MatrixXd a(p.size(), 2);
    Eigen::VectorXd y(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
      a(k, 0) = p[k];
      a(k, 1) = 1.0;
      y(k) = g[k];
    }
    const Eigen::Vector2d sol = a.colPivHouseholderQr().solve(y);
    s = sol(0);
    b = sol(1);
  } else {
    std::vector<double> r;
    for (std::size_t k = 0; k < p.size(); ++k) r.push_back(g[k] / p[k]);
    s = naive_median(r);
  }
  NaiveDepth d;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double a = s * p[k] + b;
    d.abs_rel += std::abs(a - g[k]) / g[k];
    d.delta1 += (a > 0 && a / g[k] < 1.25 && g[k] / a < 1.25) ? 1.0 : 0.0;
  }
  d.abs_rel /= p.size();
  d.delta1 /= p.size();
  return d;
}

}  // namespace oracle
