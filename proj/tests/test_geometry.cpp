#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "test_util.hpp"
#include "vslam/geometry/alignment.hpp"
#include "vslam/geometry/camera.hpp"
#include "vslam/geometry/epipolar.hpp"
#include "vslam/geometry/p3p.hpp"
#include "vslam/geometry/se3.hpp"
#include "vslam/geometry/triangulation.hpp"

namespace vslam {
namespace {

using test::RandomPose;

TEST(Se3, GroupAxioms) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const Se3Pose a = RandomPose(rng);
    const Se3Pose b = RandomPose(rng);
    const Se3Pose c = RandomPose(rng);
    EXPECT_LT((((a * b) * c).matrix() - (a * (b * c)).matrix()).norm(), 1e-9);
    EXPECT_LT(((a * Se3Pose::Identity()).matrix() - a.matrix()).norm(), 1e-12);
    EXPECT_LT(((a * a.inverse()).matrix() - Mat4::Identity()).norm(), 1e-9);
    EXPECT_LT(((a * b).inverse().matrix() - (b.inverse() * a.inverse()).matrix()).norm(), 1e-9);
  }
}

TEST(Se3, LongCompositionStaysOrthonormal) {
  Rng rng(2);
  Se3Pose t;
  for (int i = 0; i < 10000; ++i) t = t * RandomPose(rng, 0.3, 0.1);
  const Mat3 r = t.rotation();
  EXPECT_LT((r.transpose() * r - Mat3::Identity()).norm(), 1e-9);
  EXPECT_NEAR(r.determinant(), 1.0, 1e-9);
}

TEST(Se3, ExpLogRoundtrip) {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    Vec6 xi;
    for (int k = 0; k < 6; ++k) xi[k] = rng.Normal();
    Vec3 phi = xi.tail<3>();
    const double angle = rng.Uniform(0.0, kPi - 1e-3);
    xi.tail<3>() = angle * phi.normalized();
    const Se3Pose t = Se3Pose::Exp(xi);
    EXPECT_LT((Se3Pose::Exp(t.Log()).matrix() - t.matrix()).norm(), 1e-9);
  }
}

TEST(Se3, AdjointIdentity) {
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const Se3Pose t = RandomPose(rng);
    Vec6 xi;
    for (int k = 0; k < 6; ++k) xi[k] = 0.3 * rng.Normal();
    const Se3Pose lhs = t * Se3Pose::Exp(xi) * t.inverse();
    const Se3Pose rhs = Se3Pose::Exp(t.Adjoint() * xi);
    EXPECT_LT((lhs.matrix() - rhs.matrix()).norm(), 1e-9);
  }
}

TEST(Camera, ProjectTrivial) {
  CameraModel unit;
  auto p = Project(unit, Se3Pose(), Vec3(0, 0, 1));
  ASSERT_TRUE(p);
  EXPECT_DOUBLE_EQ(p->x(), 0.0);
  EXPECT_DOUBLE_EQ(p->y(), 0.0);
  CameraModel c;
  c.fx = c.fy = 100;
  c.cx = c.cy = 50;
  p = Project(c, Se3Pose(), Vec3(0.1, 0.2, 1));
  ASSERT_TRUE(p);
  EXPECT_NEAR(p->x(), 60.0, 1e-12);
  EXPECT_NEAR(p->y(), 70.0, 1e-12);
  EXPECT_FALSE(Project(c, Se3Pose(), Vec3(0.1, 0.2, -1)));
  EXPECT_FALSE(Project(c, Se3Pose(), Vec3(0.1, 0.2, 0.0)));
}

TEST(Camera, UnprojectTrivial) {
  CameraModel c;
  c.fx = c.fy = 100;
  c.cx = c.cy = 50;
  EXPECT_LT((Unproject(c, Vec2(50, 50)) - Vec3(0, 0, 1)).norm(), 1e-15);
  EXPECT_LT((Unproject(c, Vec2(60, 70)) - Vec3(0.1, 0.2, 1)).norm(), 1e-15);
}

TEST(Camera, ProjectUnprojectRoundtrip) {
  Rng rng(5);
  const CameraModel cam = test::PinholeCamera();
  for (int i = 0; i < 1000; ++i) {
    const Se3Pose pose = RandomPose(rng);
    const Vec3 pc(rng.Uniform(-3, 3), rng.Uniform(-3, 3), rng.Uniform(0.2, 30));
    const Vec3 pw = pose.inverse() * pc;
    const auto px = Project(cam, pose, pw);
    ASSERT_TRUE(px);
    const Vec3 back = pc.z() * Unproject(cam, *px);
    EXPECT_LT((back - pc).norm(), 1e-9);
    EXPECT_LT(std::acos(std::min(1.0, back.normalized().dot(pc.normalized()))), 1e-7);
  }
  for (int i = 0; i < 1000; ++i) {
    const Vec2 px(rng.Uniform(0, cam.width), rng.Uniform(0, cam.height));
    const auto again = cam.ProjectUndistorted(rng.Uniform(0.5, 10.0) * cam.Unproject(px));
    ASSERT_TRUE(again);
    EXPECT_LT((*again - px).norm(), 1e-9);
  }
}

class DistortionTest : public ::testing::TestWithParam<int> {};

TEST_P(DistortionTest, UndistortInvertsDistort) {
  const CameraModel cam = GetParam() == 0 ? test::RadTanCamera() : test::FisheyeCamera();
  Rng rng(6);
  int checked = 0;
  double worst = 0.0;
  for (int i = 0; i < 20000 && checked < 2000; ++i) {
    const Vec2 undist(rng.Uniform(-0.2, 1.2) * cam.width, rng.Uniform(-0.2, 1.2) * cam.height);
    const Vec2 raw = cam.Distort(undist);
    if (!cam.InImage(raw)) continue;
    ++checked;
    worst = std::max(worst, (cam.Undistort(raw) - undist).norm());
  }
  EXPECT_GT(checked, 1000);
  EXPECT_LT(worst, 1e-6);
}

TEST_P(DistortionTest, RawProjectionRoundtrip) {
  const CameraModel cam = GetParam() == 0 ? test::RadTanCamera() : test::FisheyeCamera();
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const Vec2 raw(rng.Uniform(0, cam.width - 1), rng.Uniform(0, cam.height - 1));
    const Vec3 bearing = cam.Unproject(cam.Undistort(raw));
    const auto back = cam.ProjectDistorted(3.0 * bearing);
    ASSERT_TRUE(back);
    EXPECT_LT((*back - raw).norm(), 1e-6);
  }
}

INSTANTIATE_TEST_SUITE_P(Models, DistortionTest, ::testing::Values(0, 1));

TEST(Triangulation, NoiselessRecovery) {
  Rng rng(8);
  const Se3Pose a_cw;
  const Se3Pose b_cw(Mat3::Identity(), Vec3(-0.5, 0, 0));
  const Vec3 pw(0.3, -0.2, 4.0);
  auto p = Triangulate(a_cw, b_cw, a_cw * pw / (a_cw * pw).z(), b_cw * pw / (b_cw * pw).z());
  ASSERT_TRUE(p);
  EXPECT_LT((*p - pw).norm(), 1e-9);

  int accepted = 0;
  for (int i = 0; i < 1000; ++i) {
    const Se3Pose pa = RandomPose(rng, 0.3, 1.0);
    const Se3Pose pb = pa * Se3Pose(ExpSO3Quat(Vec3(rng.Normal(), rng.Normal(), rng.Normal()) * 0.1),
                                    Vec3(rng.Normal(), rng.Normal(), rng.Normal()));
    const Vec3 pc(rng.Uniform(-2, 2), rng.Uniform(-2, 2), rng.Uniform(1, 10));
    const Vec3 w = pa.inverse() * pc;
    const Vec3 ca = pa * w;
    const Vec3 cb = pb * w;
    if (cb.z() <= 0.1 || ParallaxDeg(pa, pb, ca, cb) < 1.0) continue;
    auto r = Triangulate(pa, pb, ca / ca.z(), cb / cb.z());
    ASSERT_TRUE(r);
    EXPECT_LT((*r - w).norm(), 1e-6);
    ++accepted;
  }
  EXPECT_GT(accepted, 200);
}

TEST(Triangulation, Degenerate) {
  const Se3Pose a;
  const Vec3 b(0.1, 0.1, 1.0);
  EXPECT_FALSE(Triangulate(a, a, b, b));
  // Point behind the second camera.
  const Se3Pose back(ExpSO3(Vec3(0, kPi, 0)), Vec3(0, 0, 2));
  const Vec3 pw(0.0, 0.0, 4.0);
  const Vec3 cb = back * pw;
  ASSERT_LT(cb.z(), 0.0);
  EXPECT_FALSE(Triangulate(a, back, pw / pw.z(), cb / std::abs(cb.z())));
}

TEST(Triangulation, ParallaxThreshold) {
  // 1 m baseline at ~50 m depth gives a known angle; tune the depth so the
  // ray angle is 1.01 and 0.5 degrees.
  const Se3Pose a;
  const Se3Pose b(Mat3::Identity(), Vec3(-1.0, 0, 0));
  for (const auto& [deg, expect] : {std::pair{1.01, true}, std::pair{0.5, false}}) {
    const double z = 0.5 / std::tan(0.5 * deg * kDegToRad);
    const Vec3 pw(0.5, 0.0, z);
    const Vec3 cb = b * pw;
    EXPECT_EQ(Triangulate(a, b, pw / pw.z(), cb / cb.z()).has_value(), expect) << deg;
  }
}

TEST(Epipolar, DistanceZeroForExactMatches) {
  const CameraModel cam = test::PinholeCamera();
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    const Se3Pose t_ba = RandomPose(rng, 0.1, 0.3);
    const Vec3 pa = test::RandomVisiblePoint(rng, cam, 2, 8);
    const Vec3 pb = t_ba * pa;
    if (pb.z() < 0.5) continue;
    EXPECT_LT(EpipolarDistance(EssentialFromPose(t_ba), pa / pa.z(), pb / pb.z(), cam), 1e-9);
  }
}

TEST(Epipolar, PerpendicularPerturbationStereo) {
  CameraModel cam = test::PinholeCamera();
  cam.fy = cam.fx;
  Rng rng(19);
  for (int i = 0; i < 100; ++i) {
    const Se3Pose t_rl(ExpSO3Quat(Vec3(rng.Normal(), rng.Normal(), rng.Normal()) * 0.005),
                       Vec3(-0.11, rng.Normal() * 0.002, rng.Normal() * 0.002));
    const Mat3 e = EssentialFromPose(t_rl);
    const Vec3 pl = test::RandomVisiblePoint(rng, cam, 2, 8);
    const Vec3 pr = t_rl * pl;
    const Vec3 bl = pl / pl.z();
    const Vec3 line = e * bl;
    const Vec2 nrm = Vec2(line.x(), line.y()).normalized();
    const Vec2 moved = cam.NormalizedToPixel((pr / pr.z()).head<2>()) + 3.0 * nrm;
    const double d = EpipolarDistance(e, bl, cam.Unproject(moved), cam);
    EXPECT_NEAR(d, 3.0, 0.1);
    EXPECT_GT(d, 2.0);  // rejected by a 2 px stereo filter
  }
}

TEST(Epipolar, FivePointNoiseless) {
  Rng rng(10);
  const CameraModel cam = test::PinholeCamera();
  double worst_rot = 0.0;
  double worst_dir = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const Se3Pose t_ba = RandomPose(rng, 0.2, 1.0);
    std::array<Vec3, 5> a;
    std::array<Vec3, 5> b;
    for (int i = 0; i < 5; ++i) {
      Vec3 pa;
      do {
        pa = test::RandomVisiblePoint(rng, cam, 2, 10);
      } while ((t_ba * pa).z() < 0.5);
      a[i] = pa / pa.z();
      const Vec3 pb = t_ba * pa;
      b[i] = pb / pb.z();
    }
    const auto sols = SolveEssentialFivePoint(a, b);
    ASSERT_FALSE(sols.empty());
    double best_rot = 1e9;
    double best_dir = 1e9;
    for (const Mat3& e : sols) {
      std::vector<bool> mask(5, true);
      const RelativePose rp = RecoverPose(e, a, b, mask);
      const double dr = RotationDistance(rp.t_ba, t_ba);
      const double dd = std::acos(std::clamp(
          rp.t_ba.translation().normalized().dot(t_ba.translation().normalized()), -1.0, 1.0));
      if (dr + dd < best_rot + best_dir) {
        best_rot = dr;
        best_dir = dd;
      }
    }
    worst_rot = std::max(worst_rot, best_rot);
    worst_dir = std::max(worst_dir, best_dir);
  }
  EXPECT_LT(worst_rot, 1e-6);
  EXPECT_LT(worst_dir, 1e-6);
}

TEST(Epipolar, RansacPlantedOutliers) {
  const CameraModel cam = test::PinholeCamera();
  Rng rng(11);
  const Se3Pose t_ba = RandomPose(rng, 0.1, 0.5);
  std::vector<Vec3> a;
  std::vector<Vec3> b;
  std::vector<bool> truth;
  while (a.size() < 200) {
    const Vec3 pa = test::RandomVisiblePoint(rng, cam, 2, 10);
    const Vec3 pb = t_ba * pa;
    if (pb.z() < 0.5) continue;
    a.push_back(pa / pa.z());
    const bool outlier = a.size() % 5 == 0;
    if (outlier) {
      b.push_back(cam.Unproject(Vec2(rng.Uniform(0, cam.width), rng.Uniform(0, cam.height))));
    } else {
      b.push_back(pb / pb.z());
    }
    truth.push_back(!outlier);
  }
  const auto r = EstimateEssentialRansac(a, b, cam, RansacOptions{}, rng);
  ASSERT_TRUE(r.success);
  int kept = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (truth[i]) {
      kept += r.inliers[i];
    } else if (r.inliers[i]) {
      // A random outlier may land on its epipolar line by chance.
      EXPECT_LT(EpipolarDistance(r.essential, a[i], b[i], cam), 3.0);
    }
  }
  EXPECT_EQ(kept, 160);
}

TEST(P3P, NoiselessMinimal) {
  Rng rng(12);
  const CameraModel cam = test::PinholeCamera();
  int solved = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const Se3Pose t_cw = RandomPose(rng);
    std::array<Vec3, 4> pw;
    std::array<Vec2, 4> px;
    for (int i = 0; i < 4; ++i) {
      const Vec3 pc = test::RandomVisiblePoint(rng, cam, 1, 10);
      pw[i] = t_cw.inverse() * pc;
      px[i] = *cam.ProjectUndistorted(pc);
    }
    const std::array<Vec3, 3> bearings{cam.Unproject(px[0]), cam.Unproject(px[1]),
                                       cam.Unproject(px[2])};
    const auto sols = SolveP3P(std::span(pw).first<3>(), bearings);
    // Disambiguate with the fourth point.
    double best = 1e9;
    const Se3Pose* pick = nullptr;
    for (const auto& s : sols) {
      const auto q = Project(cam, s, pw[3]);
      if (q && (*q - px[3]).norm() < best) {
        best = (*q - px[3]).norm();
        pick = &s;
      }
    }
    if (!pick) continue;
    if (RotationDistance(*pick, t_cw) < 1e-6 &&
        (pick->translation() - t_cw.translation()).norm() < 1e-6) {
      ++solved;
    }
  }
  EXPECT_GE(solved, 495);
}

TEST(P3P, CollinearFails) {
  const std::array<Vec3, 3> pw{Vec3(0, 0, 5), Vec3(1, 0, 5), Vec3(2, 0, 5)};
  const std::array<Vec3, 3> b{Vec3(0, 0, 1), Vec3(0.2, 0, 1), Vec3(0.4, 0, 1)};
  EXPECT_TRUE(SolveP3P(pw, b).empty());
  const CameraModel cam = test::PinholeCamera();
  std::vector<Vec3> line;
  std::vector<Vec2> px;
  for (int i = 0; i < 20; ++i) {
    line.emplace_back(-1.0 + 0.1 * i, 0.05 * i, 5.0);
    px.push_back(*cam.ProjectUndistorted(line.back()));
  }
  Rng rng(13);
  RansacOptions opt;
  opt.max_iterations = 100;
  EXPECT_FALSE(EstimatePoseP3PRansac(line, px, cam, opt, rng).success);
}

TEST(P3P, RansacWithOutliers) {
  const CameraModel cam = test::PinholeCamera();
  RansacOptions opt;
  opt.max_iterations = 100;
  int good = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(100 + trial);
    const Se3Pose t_cw = RandomPose(rng);
    std::vector<Vec3> pw;
    std::vector<Vec2> px;
    for (int i = 0; i < 100; ++i) {
      const Vec3 pc = test::RandomVisiblePoint(rng, cam, 1, 10);
      pw.push_back(t_cw.inverse() * pc);
      if (i % 10 < 3) {
        px.emplace_back(rng.Uniform(0, cam.width), rng.Uniform(0, cam.height));
      } else {
        px.push_back(*cam.ProjectUndistorted(pc));
      }
    }
    const auto r = EstimatePoseP3PRansac(pw, px, cam, opt, rng);
    if (r.success && RotationDistance(r.pose_cw, t_cw) < 1e-3) ++good;
  }
  EXPECT_GE(good, 99);
}

TEST(Alignment, UmeyamaRecoversSimilarity) {
  Rng rng(14);
  const Se3Pose t = RandomPose(rng);
  const double s = 2.5;
  std::vector<Vec3> src;
  std::vector<Vec3> dst;
  for (int i = 0; i < 50; ++i) {
    src.emplace_back(rng.Normal(), rng.Normal(), rng.Normal());
    dst.push_back(s * (t.rotation() * src.back()) + t.translation());
  }
  const Similarity3 sim = Umeyama(src, dst, true);
  EXPECT_NEAR(sim.scale, s, 1e-12);
  EXPECT_LT((sim.rotation - t.rotation()).norm(), 1e-12);
  EXPECT_LT((sim.translation - t.translation()).norm(), 1e-12);
  const Similarity3 rigid = Umeyama(src, src, false);
  EXPECT_LT((rigid.rotation - Mat3::Identity()).norm(), 1e-12);
}

}  // namespace
}  // namespace vslam
