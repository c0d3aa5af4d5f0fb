#include "trackcouple/pose.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "trackcouple/error.hpp"
#include "trackcouple/point_index.hpp"

namespace trackcouple {
namespace {

constexpr double kSmallAngle = 1e-5;

Vec3 vee(const Mat3& m) { return Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)); }

// Left Jacobian of SO(3); maps the translational tangent into t.
Mat3 left_jacobian(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 k = skew(omega);
  double a;
  double b;
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    a = 0.5 - t2 / 24.0;
    b = 1.0 / 6.0 - t2 / 120.0;
  } else {
    a = (1.0 - std::cos(theta)) / (theta * theta);
    b = (theta - std::sin(theta)) / (theta * theta * theta);
  }
  return Mat3::Identity() + a * k + b * k * k;
}

Mat3 left_jacobian_inverse(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 k = skew(omega);
  double c;
  if (theta < kSmallAngle) {
    c = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    c = 1.0 / (theta * theta) - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  }
  return Mat3::Identity() - 0.5 * k + c * k * k;
}

}  // namespace

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kLogNearPi: return "LogNearPi";
    case ErrorCode::kDegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::kOutOfDomain: return "OutOfDomain";
    case ErrorCode::kUnknownBlock: return "UnknownBlock";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kMissingTargets: return "MissingTargets";
    case ErrorCode::kConfigInvalid: return "ConfigInvalid";
    case ErrorCode::kDiverged: return "Diverged";
    case ErrorCode::kEmptyValidMask: return "EmptyValidMask";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kFormat: return "FormatError";
  }
  return "Unknown";
}

Pose Pose::from_matrix(const Mat4& m) {
  return Pose(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

Pose Pose::operator*(const Pose& rhs) const {
  Pose out(rotation_ * rhs.rotation_, rotation_ * rhs.translation_ + translation_);
  out.compositions_ = std::max(compositions_, rhs.compositions_) + 1;
  if (out.compositions_ >= kReorthonormalizeEvery) {
    out.rotation_ = nearest_rotation(out.rotation_);
    out.compositions_ = 0;
  }
  return out;
}

Pose Pose::inverse() const {
  Pose out(rotation_.transpose(), -(rotation_.transpose() * translation_));
  out.compositions_ = compositions_;
  return out;
}

Vec6 PoseTangent::stacked() const {
  Vec6 v;
  v << omega, upsilon;
  return v;
}

PoseTangent PoseTangent::from_stacked(const Vec6& v) {
  return PoseTangent{v.head<3>(), v.tail<3>()};
}

Similarity Similarity::inverse() const {
  Similarity out;
  out.scale = 1.0 / scale;
  out.rotation = rotation.transpose();
  out.translation = -(rotation.transpose() * translation) / scale;
  return out;
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<   0.0, -v.z(),  v.y(),
       v.z(),    0.0, -v.x(),
      -v.y(),  v.x(),    0.0;
  // clang-format on
  return s;
}

Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(2, 2) = -1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

Pose compose(const Pose& a, const Pose& b) { return a * b; }

Pose inverse(const Pose& p) { return p.inverse(); }

Pose relative_pose(const Pose& c_t, const Pose& c_x) { return c_x.inverse() * c_t; }

Vec3 transform_point(const Pose& p, const Vec3& x) { return p * x; }

Mat3 so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 k = skew(omega);
  double a;
  double b;
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    a = 1.0 - t2 / 6.0;
    b = 0.5 - t2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / (theta * theta);
  }
  return Mat3::Identity() + a * k + b * k * k;
}

double rotation_angle(const Mat3& r) {
  const double s = 0.5 * vee(r).norm();
  const double c = 0.5 * (r.trace() - 1.0);
  return std::atan2(s, c);
}

Vec3 so3_log(const Mat3& r) {
  const double trace = r.trace();
  if (trace <= -1.0 + 1e-6) {
    throw Error(ErrorCode::kLogNearPi, "rotation angle too close to pi for a stable logarithm");
  }
  const Vec3 v = vee(r);
  const double s = 0.5 * v.norm();
  const double c = 0.5 * (trace - 1.0);
  const double theta = std::atan2(s, c);
  double factor;
  if (theta < kSmallAngle) {
    factor = 0.5 * (1.0 + theta * theta / 6.0);
  } else {
    factor = theta / (2.0 * std::sin(theta));
  }
  return factor * v;
}

Pose exp_map(const PoseTangent& tangent) {
  return Pose(so3_exp(tangent.omega), left_jacobian(tangent.omega) * tangent.upsilon);
}

PoseTangent log_map(const Pose& p) {
  PoseTangent out;
  out.omega = so3_log(p.rotation());
  out.upsilon = left_jacobian_inverse(out.omega) * p.translation();
  return out;
}

Pose perturb_left(const Pose& p, const PoseTangent& delta) { return exp_map(delta) * p; }

Similarity umeyama(std::span<const Vec3> src, std::span<const Vec3> dst, bool with_scale) {
  if (src.size() != dst.size()) {
    throw Error(ErrorCode::kDegenerateConfiguration, "point lists differ in length");
  }
  const std::size_t n = src.size();
  if (n < 3) {
    throw Error(ErrorCode::kDegenerateConfiguration, "at least three point pairs are required");
  }
  const double inv_n = 1.0 / static_cast<double>(n);

  Vec3 mu_src = Vec3::Zero();
  Vec3 mu_dst = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mu_src += src[i];
    mu_dst += dst[i];
  }
  mu_src *= inv_n;
  mu_dst *= inv_n;

  Mat3 cov_src = Mat3::Zero();
  Mat3 cross = Mat3::Zero();
  double var_src = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 a = src[i] - mu_src;
    const Vec3 b = dst[i] - mu_dst;
    cov_src += a * a.transpose();
    cross += b * a.transpose();
    var_src += a.squaredNorm();
  }
  cov_src *= inv_n;
  cross *= inv_n;
  var_src *= inv_n;

  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov_src, Eigen::EigenvaluesOnly);
  const Vec3 lambda = eig.eigenvalues();  // ascending
  const double scale_sq = std::max(mu_src.squaredNorm(), 1.0);
  if (lambda[2] <= 1e-24 * scale_sq) {
    throw Error(ErrorCode::kDegenerateConfiguration, "source points are coincident");
  }
  if (lambda[1] <= 1e-10 * lambda[2]) {
    throw Error(ErrorCode::kDegenerateConfiguration, "source points are collinear");
  }

  Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) s(2, 2) = -1.0;

  Similarity out;
  out.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  if (with_scale) {
    const double trace_ds = (svd.singularValues().asDiagonal() * s).trace();
    out.scale = trace_ds / var_src;
    if (!(out.scale > 0.0)) {
      throw Error(ErrorCode::kDegenerateConfiguration, "destination points are coincident");
    }
  }
  out.translation = mu_dst - out.scale * out.rotation * mu_src;
  return out;
}

IcpResult icp_refine(std::span<const Vec3> src, std::span<const Vec3> dst,
                     const Similarity& initial, const IcpOptions& options) {
  IcpResult result;
  result.transform = initial;
  if (src.empty() || dst.empty()) {
    throw Error(ErrorCode::kDegenerateConfiguration, "ICP needs non-empty clouds");
  }
  const PointIndex index(dst);

  std::vector<Vec3> scaled(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) scaled[i] = initial.scale * src[i];
  std::vector<Vec3> matched(src.size());

  double previous = -1.0;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    double residual = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const Vec3 moved = result.transform.rotation * scaled[i] + result.transform.translation;
      const Neighbor nn = index.nearest(moved);
      matched[i] = dst[nn.index];
      residual += std::sqrt(nn.squared_distance);
    }
    residual /= static_cast<double>(src.size());
    result.mean_residual = residual;
    result.iterations = iter + 1;
    if (previous >= 0.0 && std::abs(previous - residual) < options.min_residual_change) {
      result.converged = true;
      break;
    }
    previous = residual;
    const Similarity step = umeyama(scaled, matched, /*with_scale=*/false);
    result.transform.rotation = step.rotation;
    result.transform.translation = step.translation;
  }
  return result;
}

}  // namespace trackcouple
