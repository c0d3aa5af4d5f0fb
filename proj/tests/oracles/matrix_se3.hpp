#pragma once

// Homogeneous 4x4 reference for rigid-transform arithmetic. Deliberately shares
// no code with the library: exponentials come from a truncated power series of
// the 4x4 twist matrix, angles from quaternions.

#include <Eigen/Dense>
#include <cmath>
#include <random>

namespace oracle {

using M4 = Eigen::Matrix4d;
using V3 = Eigen::Vector3d;
using M3 = Eigen::Matrix3d;

inline M4 homogeneous(const M3& r, const V3& t) {
  M4 m = M4::Identity();
  m.topLeftCorner<3, 3>() = r;
  m.topRightCorner<3, 1>() = t;
  return m;
}

inline M4 inverse(const M4& m) { return m.inverse(); }  // general LU inverse

inline V3 apply(const M4& m, const V3& x) {
  Eigen::Vector4d h(x.x(), x.y(), x.z(), 1.0);
  return (m * h).head<3>();
}

// Twist [w]x, v in a 4x4, exponentiated by squaring-and-series.
inline M4 twist_exp(const V3& omega, const V3& upsilon) {
  M4 a = M4::Zero();
  a(0, 1) = -omega.z();
  a(0, 2) = omega.y();
  a(1, 0) = omega.z();
  a(1, 2) = -omega.x();
  a(2, 0) = -omega.y();
  a(2, 1) = omega.x();
  a.topRightCorner<3, 1>() = upsilon;
  int squarings = 0;
  while (a.norm() > 0.25) {
    a *= 0.5;
    ++squarings;
  }
  M4 sum = M4::Identity(), term = M4::Identity();
  for (int k = 1; k < 30; ++k) {
    term = term * a / static_cast<double>(k);
    sum += term;
  }
  for (int s = 0; s < squarings; ++s) sum = sum * sum;
  return sum;
}

// Rotation angle via the quaternion of the matrix (no trace/acos).
inline double angle(const M3& r) {
  Eigen::Quaterniond q(r);
  return 2.0 * std::atan2(q.vec().norm(), std::abs(q.w()));
}

inline M3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized().toRotationMatrix();
}

inline V3 random_vector(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return V3(u(rng), u(rng), u(rng));
}

}  // namespace oracle
