#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

namespace trackcouple {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Rigid transform x -> R x + t. Camera poses are stored camera-to-world, so
// the world-to-camera map of frame t is inverse(pose_t).
class Pose {
 public:
  // Rotations are projected back onto SO(3) after this many compositions.
  static constexpr std::uint32_t kReorthonormalizeEvery = 64;

  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  Pose(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  static Pose identity() { return Pose(); }
  static Pose from_matrix(const Mat4& m);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Mat4 matrix() const;

  Vec3 operator*(const Vec3& x) const { return rotation_ * x + translation_; }
  // Applies rhs first, then *this.
  Pose operator*(const Pose& rhs) const;

  Pose inverse() const;

  std::uint32_t compositions_since_projection() const { return compositions_; }

 private:
  Mat3 rotation_;
  Vec3 translation_;
  std::uint32_t compositions_ = 0;
};

struct PoseTangent {
  Vec3 omega = Vec3::Zero();    // axis-angle, radians
  Vec3 upsilon = Vec3::Zero();  // translational part

  Vec6 stacked() const;
  static PoseTangent from_stacked(const Vec6& v);
  double norm() const { return stacked().norm(); }
};

struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 operator*(const Vec3& x) const { return scale * (rotation * x) + translation; }
  Similarity inverse() const;
};

Mat3 skew(const Vec3& v);
Mat3 nearest_rotation(const Mat3& m);

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);
// Transform taking frame-t camera coordinates into anchor-frame coordinates.
Pose relative_pose(const Pose& c_t, const Pose& c_x);
Vec3 transform_point(const Pose& p, const Vec3& x);

Mat3 so3_exp(const Vec3& omega);
// Throws kLogNearPi when trace(R) <= -1 + 1e-6.
Vec3 so3_log(const Mat3& r);
// Rotation angle in radians, robust over the whole [0, pi] range.
double rotation_angle(const Mat3& r);

Pose exp_map(const PoseTangent& tangent);
PoseTangent log_map(const Pose& p);

// Left perturbation: exp(delta) * p.
Pose perturb_left(const Pose& p, const PoseTangent& delta);

// Least-squares similarity dst ~ s R src + t. Throws kDegenerateConfiguration
// for fewer than three pairs or collinear / coincident source points.
Similarity umeyama(std::span<const Vec3> src, std::span<const Vec3> dst, bool with_scale);

struct IcpOptions {
  int max_iterations = 20;
  double min_residual_change = 1e-6;
};

struct IcpResult {
  Similarity transform;
  int iterations = 0;
  double mean_residual = 0.0;
  bool converged = false;
};

// Point-to-point rigid ICP of src onto dst starting from `initial`. The scale
// of `initial` is kept fixed; only rotation and translation are refined.
IcpResult icp_refine(std::span<const Vec3> src, std::span<const Vec3> dst,
                     const Similarity& initial, const IcpOptions& options = {});

}  // namespace trackcouple
