#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles/horn_alignment.hpp"
#include "oracles/matrix_se3.hpp"
#include "trackcouple/error.hpp"
#include "trackcouple/pose.hpp"

using namespace trackcouple;

namespace {

Pose random_pose(std::mt19937_64& rng, double t_scale = 2.0) {
  return Pose(oracle::random_rotation(rng), oracle::random_vector(rng, t_scale));
}

double max_abs(const Mat4& m) { return m.cwiseAbs().maxCoeff(); }

Mat3 rot_z(double deg) { return Eigen::AngleAxisd(deg * std::numbers::pi / 180.0, Vec3::UnitZ()).toRotationMatrix(); }

}  // namespace

TEST(Pose, ComposeIdentity) {
  EXPECT_EQ(max_abs(compose(Pose(), Pose()).matrix() - Mat4::Identity()), 0.0);
}

TEST(Pose, ComposeMatchesHomogeneousMultiply) {
  const Pose a(rot_z(90), Vec3(1, 0, 0));
  const Pose b(rot_z(90), Vec3(0, 1, 0));
  const Mat4 expected = oracle::homogeneous(rot_z(90), Vec3(1, 0, 0)) * oracle::homogeneous(rot_z(90), Vec3(0, 1, 0));
  EXPECT_LT(max_abs(compose(a, b).matrix() - expected), 1e-12);
  // Rz(180), and the second translation rotated by the first.
  EXPECT_LT((compose(a, b).translation() - Vec3(0, 0, 0)).norm(), 1e-12);

  std::mt19937_64 rng(1);
  for (int k = 0; k < 50; ++k) {
    const Pose p = random_pose(rng), q = random_pose(rng);
    EXPECT_LT(max_abs(compose(p, q).matrix() - p.matrix() * q.matrix()), 1e-12);
  }
}

TEST(Pose, InverseCancels) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 50; ++k) {
    const Pose p = random_pose(rng);
    EXPECT_LT(max_abs(compose(p, inverse(p)).matrix() - Mat4::Identity()), 1e-9);
    EXPECT_LT(max_abs(compose(inverse(p), p).matrix() - Mat4::Identity()), 1e-9);
  }
}

TEST(Pose, Associativity) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 100; ++k) {
    const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    EXPECT_LT(max_abs((a * b * c).matrix() - (a * (b * c)).matrix()), 1e-9);
  }
}

TEST(Pose, RelativePose) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 50; ++k) {
    const Pose ct = random_pose(rng), cx = random_pose(rng);
    const Mat4 expected = oracle::inverse(cx.matrix()) * ct.matrix();
    EXPECT_LT(max_abs(relative_pose(ct, cx).matrix() - expected), 1e-12);
    EXPECT_LT(max_abs(relative_pose(ct, ct).matrix() - Mat4::Identity()), 1e-12);
    EXPECT_LT(max_abs(relative_pose(Pose(), cx).matrix() - inverse(cx).matrix()), 1e-12);
    // t->x followed by x->t
    EXPECT_LT(max_abs((relative_pose(ct, cx) * relative_pose(cx, ct)).matrix() - Mat4::Identity()), 1e-9);
  }
}

TEST(Pose, TransformPoint) {
  EXPECT_EQ(transform_point(Pose(), Vec3(1, 2, 3)), Vec3(1, 2, 3));
  EXPECT_EQ(transform_point(Pose(Mat3::Identity(), Vec3(0, 0, 5)), Vec3::Zero()), Vec3(0, 0, 5));
  std::mt19937_64 rng(5);
  for (int k = 0; k < 50; ++k) {
    const Pose p = random_pose(rng);
    const Vec3 x = oracle::random_vector(rng, 3.0);
    EXPECT_LT((transform_point(p, x) - oracle::apply(p.matrix(), x)).norm(), 1e-12);
  }
}

TEST(Pose, LongCompositionChainStaysOrthonormal) {
  std::mt19937_64 rng(6);
  Pose acc;
  for (int k = 0; k < 10000; ++k) acc = acc * exp_map({oracle::random_vector(rng, 0.3), oracle::random_vector(rng, 0.1)});
  const Mat3 r = acc.rotation();
  EXPECT_LT((r.transpose() * r - Mat3::Identity()).norm(), 1e-9);
  EXPECT_NEAR(r.determinant(), 1.0, 1e-9);
  EXPECT_LT(acc.compositions_since_projection(), Pose::kReorthonormalizeEvery);
}

TEST(Pose, ExpZeroIsIdentity) {
  EXPECT_EQ(max_abs(exp_map(PoseTangent{}).matrix() - Mat4::Identity()), 0.0);
}

TEST(Pose, ExpMatchesTwistSeries) {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 100; ++k) {
    const Vec3 w = oracle::random_vector(rng, 1.7), v = oracle::random_vector(rng, 2.0);
    EXPECT_LT(max_abs(exp_map({w, v}).matrix() - oracle::twist_exp(w, v)), 1e-12);
  }
}

TEST(Pose, ExpSmallAngleFirstOrder) {
  const Vec3 w(1e-4, -2e-4, 3e-4), v(2e-4, 1e-4, -1e-4);
  Mat4 first = Mat4::Identity();
  first.topLeftCorner<3, 3>() += skew(w);
  first.topRightCorner<3, 1>() = v;
  // Second-order remainder.
  EXPECT_LT(max_abs(exp_map({w, v}).matrix() - first), 2.0 * (w.squaredNorm() + w.norm() * v.norm()));
}

TEST(Pose, LogExpRoundTrip) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> ang(0.0, 3.0);
  for (int k = 0; k < 200; ++k) {
    const Vec3 w = oracle::random_vector(rng, 1.0).normalized() * ang(rng);
    const Vec3 v = oracle::random_vector(rng, 2.0);
    const PoseTangent back = log_map(exp_map({w, v}));
    EXPECT_LT((back.omega - w).norm(), 1e-9);
    EXPECT_LT((back.upsilon - v).norm(), 1e-9);
  }
}

TEST(Pose, ExpLogRoundTripOnPoses) {
  std::mt19937_64 rng(9);
  for (int k = 0; k < 200; ++k) {
    const Pose p = random_pose(rng);
    if (oracle::angle(p.rotation()) > std::numbers::pi - 1e-6) continue;
    EXPECT_LT(max_abs(exp_map(log_map(p)).matrix() - p.matrix()), 1e-9);
  }
}

TEST(Pose, LogNearPiThrows) {
  const Mat3 r = Eigen::AngleAxisd(std::numbers::pi, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  try {
    so3_log(r);
    FAIL() << "expected LogNearPi";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLogNearPi);
  }
  EXPECT_THROW(log_map(Pose(r, Vec3::Zero())), Error);
}

TEST(Pose, RotationAngleAgreesWithQuaternion) {
  std::mt19937_64 rng(10);
  for (int k = 0; k < 100; ++k) {
    const Mat3 r = oracle::random_rotation(rng);
    EXPECT_NEAR(rotation_angle(r), oracle::angle(r), 1e-12);
  }
  EXPECT_NEAR(rotation_angle(rot_z(1e-7)), 1e-7 * std::numbers::pi / 180.0, 1e-18);
}

TEST(Pose, PerturbLeftMultipliesOnTheLeft) {
  std::mt19937_64 rng(11);
  const Pose p = random_pose(rng);
  const PoseTangent d{Vec3(0.1, 0.0, -0.2), Vec3(0.3, 0.1, 0.0)};
  EXPECT_LT(max_abs(perturb_left(p, d).matrix() - oracle::twist_exp(d.omega, d.upsilon) * p.matrix()), 1e-12);
}

TEST(Pose, NearestRotationProjects) {
  std::mt19937_64 rng(12);
  const Mat3 r = oracle::random_rotation(rng);
  Mat3 noisy = r;
  noisy(0, 1) += 1e-6;
  const Mat3 q = nearest_rotation(noisy);
  EXPECT_LT((q.transpose() * q - Mat3::Identity()).norm(), 1e-12);
  EXPECT_LT((q - r).norm(), 2e-6);
}

TEST(Similarity, InverseRoundTrip) {
  std::mt19937_64 rng(13);
  Similarity s{2.5, oracle::random_rotation(rng), Vec3(1, -2, 3)};
  const Vec3 x(0.3, 0.2, -0.7);
  EXPECT_LT((s.inverse() * (s * x) - x).norm(), 1e-9);
  EXPECT_LT((s * (s.inverse() * x) - x).norm(), 1e-9);
}

TEST(Umeyama, IdentityOnEqualClouds) {
  std::mt19937_64 rng(14);
  std::vector<Vec3> a;
  for (int k = 0; k < 10; ++k) a.push_back(oracle::random_vector(rng));
  const Similarity s = umeyama(a, a, true);
  EXPECT_NEAR(s.scale, 1.0, 1e-12);
  EXPECT_LT((s.rotation - Mat3::Identity()).norm(), 1e-12);
  EXPECT_LT(s.translation.norm(), 1e-12);
}

TEST(Umeyama, RecoversKnownSimilarity) {
  std::mt19937_64 rng(15);
  std::vector<Vec3> src, dst;
  const Mat3 r = rot_z(45);
  for (int k = 0; k < 12; ++k) {
    src.push_back(oracle::random_vector(rng));
    dst.push_back(2.0 * (r * src.back()) + Vec3(1, 1, 1));
  }
  const Similarity s = umeyama(src, dst, true);
  EXPECT_NEAR(s.scale, 2.0, 1e-9);
  EXPECT_LT(oracle::angle(s.rotation.transpose() * r), 1e-9);
  EXPECT_LT((s.translation - Vec3(1, 1, 1)).norm(), 1e-9);
}

TEST(Umeyama, MatchesHornOnNoisyPairs) {
  std::mt19937_64 rng(16);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (int c = 0; c < 30; ++c) {
    std::vector<Vec3> src, dst;
    const Mat3 r = oracle::random_rotation(rng);
    for (int k = 0; k < 20; ++k) {
      src.push_back(oracle::random_vector(rng));
      dst.push_back(1.3 * (r * src.back()) + Vec3(0.5, 0, 0) + Vec3(noise(rng), noise(rng), noise(rng)));
    }
    for (bool with_scale : {true, false}) {
      const Similarity s = umeyama(src, dst, with_scale);
      const auto h = oracle::horn(src, dst, with_scale);
      EXPECT_NEAR(s.scale, h.scale, 1e-9);
      EXPECT_LT((s.rotation - h.rotation).norm(), 1e-9);
      EXPECT_LT((s.translation - h.translation).norm(), 1e-9);
    }
  }
}

TEST(Umeyama, ResidualBeatsRandomCandidates) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::vector<Vec3> src, dst;
  const Mat3 r = oracle::random_rotation(rng);
  for (int k = 0; k < 15; ++k) {
    src.push_back(oracle::random_vector(rng));
    dst.push_back(0.8 * (r * src.back()) + Vec3(noise(rng), noise(rng), noise(rng)));
  }
  auto residual = [&](const Similarity& s) {
    double e = 0;
    for (std::size_t k = 0; k < src.size(); ++k) e += (dst[k] - s * src[k]).squaredNorm();
    return e;
  };
  const double best = residual(umeyama(src, dst, true));
  std::uniform_real_distribution<double> sc(0.5, 1.2);
  std::normal_distribution<double> jitter(0.0, 0.05);
  for (int k = 0; k < 100000; ++k) {
    // Candidates around the optimum are the hardest competitors.
    Similarity cand{sc(rng), exp_map({Vec3(jitter(rng), jitter(rng), jitter(rng)), Vec3::Zero()}).rotation() * r,
                    Vec3(jitter(rng), jitter(rng), jitter(rng))};
    ASSERT_GE(residual(cand), best - 1e-12);
  }
}

TEST(Umeyama, ScaleInvariantUnderCommonRigidMotion) {
  std::mt19937_64 rng(18);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<Vec3> src, dst;
  for (int k = 0; k < 20; ++k) {
    src.push_back(oracle::random_vector(rng));
    dst.push_back(1.7 * src.back() + Vec3(noise(rng), noise(rng), noise(rng)));
  }
  const double s0 = umeyama(src, dst, true).scale;
  const Pose g = random_pose(rng);
  for (auto& p : src) p = g * p;
  for (auto& p : dst) p = g * p;
  EXPECT_NEAR(umeyama(src, dst, true).scale, s0, 1e-9);
}

TEST(Umeyama, DegenerateInputsThrow) {
  const std::vector<Vec3> two{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  const std::vector<Vec3> line{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(3, 0, 0)};
  const std::vector<Vec3> same(5, Vec3(1, 1, 1));
  for (const auto* c : {&two, &line, &same}) {
    try {
      umeyama(*c, *c, true);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kDegenerateConfiguration);
    }
  }
}

TEST(Icp, RefinesSmallRigidOffset) {
  std::mt19937_64 rng(19);
  std::vector<Vec3> src, dst;
  // Grid surface so correspondences are unambiguous.
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) src.emplace_back(0.1 * x, 0.1 * y, 0.05 * std::sin(x + 0.5 * y));
  const Pose g = exp_map({Vec3(0.02, -0.01, 0.015), Vec3(0.01, 0.005, -0.01)});
  for (const auto& p : src) dst.push_back(g * p);
  const IcpResult r = icp_refine(src, dst, Similarity{});
  EXPECT_LT(r.mean_residual, 1e-6);
  EXPECT_LE(r.iterations, 20);
  EXPECT_LT((r.transform.rotation - g.rotation()).norm(), 1e-5);
}
