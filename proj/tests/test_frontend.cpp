#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "vslam/frontend/frontend.hpp"
#include "vslam/geometry/triangulation.hpp"
#include "vslam/imgproc/features.hpp"
#include "vslam/pipeline/synthetic.hpp"

namespace vslam {
namespace {

using test::PinholeCamera;
using test::RandomPose;
using test::RandomVisiblePoint;

std::vector<Keypoint> Detect(const GrayImage& image, const CameraModel& cam) {
  GridOptions opts;
  std::vector<Keypoint> kps;
  KeypointId id = 0;
  for (const Corner& c : DetectGrid(image, opts, {})) {
    Keypoint k;
    k.id = id++;
    k.SetRaw(cam, c.px);
    kps.push_back(k);
  }
  return kps;
}

Frame MakeFrame(const GrayImage& image, const CameraModel& cam) {
  Frame f;
  f.pyramid = std::make_shared<ImagePyramid>(BuildPyramid(image));
  f.keypoints = Detect(image, cam);
  return f;
}

TEST(TrackFrame, IdenticalFramesKeepEveryKeypoint) {
  const CameraModel cam = PinholeCamera();
  const GrayImage img = test::RandomDotImage(640, 480, 3, Vec2::Zero(), 8000);
  Frame prev = MakeFrame(img, cam);
  ASSERT_GT(prev.keypoints.size(), 100u);
  // Half of the keypoints carry a landmark at depth 4 under the identity pose.
  MapSnapshot snap;
  for (std::size_t i = 0; i < prev.keypoints.size(); i += 2) {
    snap.tracks[prev.keypoints[i].id] = {static_cast<PointId>(i), 4.0 * prev.keypoints[i].bearing};
  }
  const TrackResult r = TrackFrame(prev, *prev.pyramid, Se3Pose(), snap, cam);
  ASSERT_EQ(r.keypoints.size(), prev.keypoints.size());
  for (std::size_t i = 0; i < r.keypoints.size(); ++i) {
    EXPECT_EQ(r.keypoints[i].id, prev.keypoints[i].id);
    EXPECT_LT((r.keypoints[i].raw_px - prev.keypoints[i].raw_px).norm(), 0.01);
  }
  EXPECT_EQ(r.stage1_ratio, 1.0);
  EXPECT_EQ(r.stage1_attempts, static_cast<int>((prev.keypoints.size() + 1) / 2));
}

class SyntheticTracking : public ::testing::Test {
 protected:
  void SetUp() override {
    SyntheticSpec spec;
    spec.trajectory = "corridor";
    spec.frames = 200;
    seq_ = std::make_unique<SyntheticSequence>(spec);
    cam_ = seq_->rig().left;
    prev_ = MakeFrame(seq_->RenderLeft(k0_), cam_);
    prev_.pose_wc = seq_->pose_wc(k0_);
    for (Keypoint& kp : prev_.keypoints) {
      if (auto p = seq_->CastRay(prev_.pose_wc, kp.bearing)) {
        snap_.tracks[kp.id] = {kp.id, *p};
        kp.is_3d = true;
      }
    }
    cur_ = BuildPyramid(seq_->RenderLeft(k0_ + 1));
  }

  // Fraction of tracked 3D keypoints that land at the true projection.
  double CorrectFraction(const TrackResult& r) const {
    int good = 0, total = 0;
    const Se3Pose cw = seq_->pose_wc(k0_ + 1).inverse();
    for (const Keypoint& k : r.keypoints) {
      const auto* tp = snap_.Find(k.id);
      if (!tp) continue;
      const auto px = cam_.ProjectDistorted(cw * tp->position);
      ++total;
      if (px && (*px - k.raw_px).norm() < 1.0) ++good;
    }
    return total ? static_cast<double>(good) / total : 0.0;
  }

  int k0_ = 40;
  std::unique_ptr<SyntheticSequence> seq_;
  CameraModel cam_;
  Frame prev_;
  MapSnapshot snap_;
  ImagePyramid cur_;
};

TEST_F(SyntheticTracking, CorrectPredictionTracksMostPointsInStageOne) {
  const TrackResult r = TrackFrame(prev_, cur_, seq_->pose_wc(k0_ + 1), snap_, cam_);
  EXPECT_GT(r.stage1_attempts, 100);
  EXPECT_GT(r.stage1_ratio, 0.9);
  EXPECT_GT(CorrectFraction(r), 0.95);
}

TEST_F(SyntheticTracking, CorruptedPredictionFailsStageOne) {
  const Se3Pose bad = seq_->pose_wc(k0_ + 1) * Se3Pose(ExpSO3(Vec3(0, 10 * kDegToRad, 0)), Vec3::Zero());
  const TrackResult r = TrackFrame(prev_, cur_, bad, snap_, cam_);
  EXPECT_LT(r.stage1_ratio, 0.5);
  // The second stage still recovers the keypoints from their previous
  // positions; the few stage-one tracks that latched onto a wrong patch are
  // left to the epipolar filter.
  EXPECT_GT(r.keypoints.size(), prev_.keypoints.size() / 2);
  Rng rng(1);
  const EpipolarFilterResult f = FilterEpipolar(prev_.keypoints, r.keypoints, cam_, {}, rng);
  TrackResult filtered;
  for (std::size_t i = 0; i < r.keypoints.size(); ++i) {
    if (f.keep[i]) filtered.keypoints.push_back(r.keypoints[i]);
  }
  EXPECT_GT(CorrectFraction(filtered), 0.98);
}

TEST_F(SyntheticTracking, OutputIdsAreSubsetOfInput) {
  const TrackResult r = TrackFrame(prev_, cur_, seq_->pose_wc(k0_ + 1), snap_, cam_);
  for (std::size_t i = 0; i < r.keypoints.size(); ++i) {
    if (i > 0) {
      EXPECT_LT(r.keypoints[i - 1].id, r.keypoints[i].id);
    }
  }
}

// Reference/current keypoint sets for a two-view configuration; a share
// of the current positions is replaced with gross outliers that sit at
// least 10 px from their epipolar line.
struct TwoView {
  std::vector<Keypoint> ref, cur;
  std::vector<bool> outlier;
};

TwoView MakeTwoView(Rng& rng, const CameraModel& cam, const Se3Pose& t_cur_ref, int n,
                    double outlier_ratio, double share_3d) {
  TwoView tv;
  const Mat3 e = EssentialFromPose(t_cur_ref);
  for (int i = 0; i < n; ++i) {
    Vec3 p, pc;
    std::optional<Vec2> px;
    do {
      p = RandomVisiblePoint(rng, cam, 2.0, 10.0);
      pc = t_cur_ref * p;
      px = cam.ProjectUndistorted(pc);
    } while (!px || !cam.InImage(*px, 1.0));
    Keypoint r, c;
    r.id = c.id = i;
    r.SetRaw(cam, *cam.ProjectUndistorted(p));
    const bool is_out = rng.Uniform() < outlier_ratio;
    if (is_out) {
      Vec2 q;
      do {
        q = Vec2(rng.Uniform(0, cam.width - 1), rng.Uniform(0, cam.height - 1));
      } while (EpipolarDistance(e, r.bearing, cam.Unproject(q), cam) < 10.0);
      c.SetRaw(cam, q);
    } else {
      c.SetRaw(cam, *px);
    }
    c.is_3d = r.is_3d = rng.Uniform() < share_3d;
    tv.ref.push_back(r);
    tv.cur.push_back(c);
    tv.outlier.push_back(is_out);
  }
  return tv;
}

TEST(FilterEpipolar, RemovesPlantedOutliersKeepsInliers) {
  const CameraModel cam = PinholeCamera();
  int trials_ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(1000 + trial);
    // Mostly sideways baseline of 0.3 m. Along the optical axis E is weakly
    // constrained by a small field of view, and a model passing through an
    // outlier can fit the inliers within the threshold.
    const Vec3 dir = Vec3(1.0, rng.Normal(0, 0.3), rng.Normal(0, 0.3)).normalized();
    const Se3Pose t(ExpSO3(Vec3(rng.Normal(0, 0.05), rng.Normal(0, 0.05), rng.Normal(0, 0.05))),
                    (rng.Uniform() < 0.5 ? 0.3 : -0.3) * dir);
    const TwoView tv = MakeTwoView(rng, cam, t, 150, 0.2, 0.7);
    const EpipolarFilterResult r = FilterEpipolar(tv.ref, tv.cur, cam, RansacOptions{}, rng);
    ASSERT_TRUE(r.ransac_ok);
    bool ok = true;
    for (std::size_t i = 0; i < tv.cur.size(); ++i) {
      if (tv.outlier[i] && r.keep[i]) ok = false;
      if (!tv.outlier[i] && !r.keep[i]) ok = false;
    }
    trials_ok += ok;
  }
  EXPECT_EQ(trials_ok, 100);
}

TEST(FilterEpipolar, PureRotationKeepsInliers) {
  const CameraModel cam = PinholeCamera();
  Rng rng(7);
  const Se3Pose t(ExpSO3(Vec3(0.02, -0.05, 0.01)), Vec3::Zero());
  const TwoView tv = MakeTwoView(rng, cam, t, 200, 0.0, 0.6);
  const EpipolarFilterResult r = FilterEpipolar(tv.ref, tv.cur, cam, RansacOptions{}, rng);
  const int kept = static_cast<int>(std::count(r.keep.begin(), r.keep.end(), true));
  EXPECT_GE(kept, 190);
}

TEST(FilterEpipolar, TooFewPointsPassThrough) {
  const CameraModel cam = PinholeCamera();
  Rng rng(8);
  const TwoView tv = MakeTwoView(rng, cam, Se3Pose(Mat3::Identity(), Vec3(0.1, 0, 0)), 4, 0.5, 1.0);
  const EpipolarFilterResult r = FilterEpipolar(tv.ref, tv.cur, cam, RansacOptions{}, rng);
  EXPECT_TRUE(r.passthrough);
  EXPECT_EQ(std::count(r.keep.begin(), r.keep.end(), true), 4);
}

struct PoseProblem {
  Se3Pose truth_wc;
  std::vector<PoseObservation> obs;
};

PoseProblem MakePoseProblem(Rng& rng, const CameraModel& cam, int n, double noise = 0.0) {
  PoseProblem p;
  p.truth_wc = RandomPose(rng, 0.5, 1.0);
  for (int i = 0; i < n; ++i) {
    const Vec3 pc = RandomVisiblePoint(rng, cam, 1.0, 8.0);
    Vec2 px = *cam.ProjectUndistorted(pc);
    px += Vec2(rng.Normal(0, noise), rng.Normal(0, noise));
    p.obs.push_back({px, p.truth_wc * pc});
  }
  return p;
}

TEST(EstimatePose, PerfectStartIsUnchanged) {
  const CameraModel cam = PinholeCamera();
  Rng rng(11);
  const PoseProblem p = MakePoseProblem(rng, cam, 100);
  const PoseResult r = EstimatePose(p.obs, cam, p.truth_wc);
  ASSERT_EQ(r.status, PoseStatus::kOk);
  EXPECT_EQ(r.num_inliers, 100);
  EXPECT_LT(RotationDistance(r.pose_wc, p.truth_wc), 1e-9);
  EXPECT_LT((r.pose_wc.translation() - p.truth_wc.translation()).norm(), 1e-9);
}

TEST(EstimatePose, ConvergesFromPerturbedStart) {
  const CameraModel cam = PinholeCamera();
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(100 + trial);
    const PoseProblem p = MakePoseProblem(rng, cam, 100);
    const Vec3 axis = Vec3(rng.Normal(), rng.Normal(), rng.Normal()).normalized();
    const Vec3 dir = Vec3(rng.Normal(), rng.Normal(), rng.Normal()).normalized();
    const Se3Pose start = p.truth_wc * Se3Pose(ExpSO3(2.0 * kDegToRad * axis), 0.05 * dir);
    const PoseResult r = EstimatePose(p.obs, cam, start);
    ASSERT_EQ(r.status, PoseStatus::kOk);
    EXPECT_EQ(r.num_inliers, 100);
    EXPECT_LT(RotationDistance(r.pose_wc, p.truth_wc), 1e-6);
    EXPECT_LT((r.pose_wc.translation() - p.truth_wc.translation()).norm(), 1e-6);
  }
}

TEST(EstimatePose, Chi2CullRemovesExactlyPlantedOutliers) {
  const CameraModel cam = PinholeCamera();
  int exact = 0, inliers_kept = 0, inliers_total = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(500 + trial);
    PoseProblem p = MakePoseProblem(rng, cam, 100, 0.3);
    std::vector<bool> planted(p.obs.size(), false);
    std::vector<PoseObservation> clean;
    for (std::size_t i = 0; i < p.obs.size(); ++i) {
      if (i % 10 == 3) {
        const double a = rng.Uniform(0, 2 * kPi);
        p.obs[i].undist_px += 20.0 * Vec2(std::cos(a), std::sin(a));
        planted[i] = true;
      } else {
        clean.push_back(p.obs[i]);
      }
    }
    const Se3Pose start = p.truth_wc * Se3Pose(ExpSO3(Vec3(0.01, -0.01, 0.005)), Vec3(0.02, 0, 0));
    const PoseResult r = EstimatePose(p.obs, cam, start);
    const PoseResult ref = EstimatePose(clean, cam, start);
    ASSERT_EQ(r.status, PoseStatus::kOk);
    bool same = true;
    for (std::size_t i = 0; i < p.obs.size(); ++i) {
      if (planted[i] == r.inliers[i]) same = false;
      if (!planted[i]) {
        ++inliers_total;
        inliers_kept += r.inliers[i];
      }
    }
    exact += same;
    EXPECT_LT(RotationDistance(r.pose_wc, ref.pose_wc), 1e-4);
  }
  EXPECT_EQ(exact, 100);
  EXPECT_GE(inliers_kept, 0.99 * inliers_total);
}

TEST(EstimatePose, TooFewPoints) {
  const CameraModel cam = PinholeCamera();
  Rng rng(12);
  const PoseProblem p = MakePoseProblem(rng, cam, 3);
  EXPECT_EQ(EstimatePose(p.obs, cam, p.truth_wc).status, PoseStatus::kInsufficientPoints);
}

TEST(P3PFallback, MinimalNoiselessSet) {
  const CameraModel cam = PinholeCamera();
  Rng rng(13);
  int exact = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const PoseProblem p = MakePoseProblem(rng, cam, 4);
    RansacOptions opts;
    opts.min_inliers = 4;
    const auto pose = P3PFallback(p.obs, cam, opts, rng);
    ASSERT_TRUE(pose.has_value());
    exact += RotationDistance(*pose, p.truth_wc) < 1e-9 &&
             (pose->translation() - p.truth_wc.translation()).norm() < 1e-9;
  }
  EXPECT_GE(exact, 49);
}

TEST(P3PFallback, ThirtyPercentOutliers) {
  const CameraModel cam = PinholeCamera();
  int good = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(2000 + trial);
    PoseProblem p = MakePoseProblem(rng, cam, 100);
    for (int i = 0; i < 30; ++i) {
      p.obs[i].undist_px = Vec2(rng.Uniform(0, 639), rng.Uniform(0, 479));
    }
    RansacOptions opts;
    opts.max_iterations = 100;
    const auto pose = P3PFallback(p.obs, cam, opts, rng);
    good += pose && RotationDistance(*pose, p.truth_wc) < 1e-3;
  }
  EXPECT_GE(good, 99);
}

TEST(P3PFallback, CollinearPointsFail) {
  const CameraModel cam = PinholeCamera();
  std::vector<PoseObservation> obs;
  for (int i = 0; i < 10; ++i) {
    const Vec3 p(-0.5 + 0.1 * i, 0.2, 4.0 + 0.05 * i);
    obs.push_back({*cam.ProjectUndistorted(p), p});
  }
  Rng rng(14);
  EXPECT_FALSE(P3PFallback(obs, cam, RansacOptions{}, rng).has_value());
}

std::vector<Keypoint> KeypointsFromPoints(const CameraModel& cam, const Se3Pose& pose_cw,
                                          const std::vector<Vec3>& pts) {
  std::vector<Keypoint> kps;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto px = cam.ProjectUndistorted(pose_cw * pts[i]);
    if (!px || !cam.InImage(*px)) continue;
    Keypoint k;
    k.id = static_cast<KeypointId>(i);
    k.SetRaw(cam, *px);
    k.is_3d = true;
    kps.push_back(k);
  }
  return kps;
}

TEST(DecideKeyframe, IdenticalFrameIsSkipped) {
  const CameraModel cam = PinholeCamera();
  Rng rng(15);
  std::vector<Vec3> pts;
  for (int i = 0; i < 200; ++i) pts.push_back(RandomVisiblePoint(rng, cam, 2, 10));
  const auto kps = KeypointsFromPoints(cam, Se3Pose(), pts);
  KeyframeOptions opts;
  opts.num_cells = 200;
  const KeyframeDecision d = DecideKeyframe(kps, kps, Mat3::Identity(), cam, opts);
  EXPECT_FALSE(d.create);
  EXPECT_EQ(d.tracked_ratio, 1.0);
  EXPECT_NEAR(d.mean_parallax_px, 0.0, 1e-9);
}

TEST(DecideKeyframe, EightyPercentTrackedCreates) {
  const CameraModel cam = PinholeCamera();
  Rng rng(16);
  std::vector<Vec3> pts;
  for (int i = 0; i < 200; ++i) pts.push_back(RandomVisiblePoint(rng, cam, 2, 10));
  const auto kf = KeypointsFromPoints(cam, Se3Pose(), pts);
  std::vector<Keypoint> cur(kf.begin(), kf.begin() + kf.size() * 8 / 10);
  KeyframeOptions opts;
  opts.num_cells = 200;
  const KeyframeDecision d = DecideKeyframe(kf, cur, Mat3::Identity(), cam, opts);
  EXPECT_NEAR(d.tracked_ratio, 0.8, 0.01);
  EXPECT_TRUE(d.create);
  // 90% stays above the threshold.
  std::vector<Keypoint> cur90(kf.begin(), kf.begin() + kf.size() * 9 / 10);
  EXPECT_FALSE(DecideKeyframe(kf, cur90, Mat3::Identity(), cam, opts).create);
}

TEST(DecideKeyframe, PureRotationOnDistantSceneIsSkipped) {
  const CameraModel cam = PinholeCamera();
  Rng rng(17);
  std::vector<Vec3> pts;
  for (int i = 0; i < 400; ++i) pts.push_back(RandomVisiblePoint(rng, cam, 200, 400));
  const auto kf = KeypointsFromPoints(cam, Se3Pose(), pts);
  // 20 deg/s at 20 Hz for 10 frames, with the small camera translation of a
  // handheld rotation.
  const Se3Pose cur_cw(ExpSO3(Vec3(0, 10.0 * kDegToRad, 0)), Vec3(0.01, 0, 0));
  auto cur = KeypointsFromPoints(cam, cur_cw, pts);
  std::vector<Keypoint> both;
  double raw_motion = 0.0;
  for (const Keypoint& c : cur) {
    if (const Keypoint* k = FindKeypoint(kf, c.id)) {
      both.push_back(c);
      raw_motion += (c.undist_px - k->undist_px).norm();
    }
  }
  raw_motion /= both.size();
  EXPECT_GT(raw_motion, 50.0);
  KeyframeOptions opts;
  opts.num_cells = 50;
  opts.min_tracked_ratio = 0.0;  // isolate the parallax trigger
  const KeyframeDecision d = DecideKeyframe(kf, both, cur_cw.rotation(), cam, opts);
  EXPECT_LT(d.mean_parallax_px, 0.1);
  EXPECT_FALSE(d.create);
  // Without compensation the same motion would trigger.
  EXPECT_TRUE(DecideKeyframe(kf, both, Mat3::Identity(), cam, opts).create);
}

TEST(DecideKeyframe, LowKeypointBudgetCreates) {
  const CameraModel cam = PinholeCamera();
  Rng rng(18);
  std::vector<Vec3> pts;
  for (int i = 0; i < 40; ++i) pts.push_back(RandomVisiblePoint(rng, cam, 2, 10));
  const auto kps = KeypointsFromPoints(cam, Se3Pose(), pts);
  KeyframeOptions opts;
  opts.num_cells = 100;
  EXPECT_TRUE(DecideKeyframe(kps, kps, Mat3::Identity(), cam, opts).create);
}

TEST(InitMonocular, LateralShiftRecoversRelativePose) {
  const CameraModel cam = PinholeCamera();
  Rng rng(19);
  const Se3Pose t10(ExpSO3(Vec3(0.01, 0.02, -0.005)), Vec3(-0.1, 0.0, 0.0));
  std::vector<Vec3> b0, b1;
  while (b0.size() < 100) {
    const Vec3 p = RandomVisiblePoint(rng, cam, 2.0, 6.0);
    const Vec3 q = t10 * p;
    const auto px = cam.ProjectUndistorted(q);
    if (!px || !cam.InImage(*px)) continue;
    b0.push_back(p / p.z());
    b1.push_back(q / q.z());
  }
  InitOptions opts;
  const InitResult r = InitMonocular(b0, b1, cam, opts, rng);
  ASSERT_EQ(r.status, InitStatus::kOk);
  EXPECT_LT(RotationDistance(r.t_10, t10), 1e-6);
  EXPECT_NEAR(r.t_10.translation().norm(), 1.0, 1e-12);
  EXPECT_LT((r.t_10.translation() - t10.translation().normalized()).norm(), 1e-6);
  // Cheirality of every triangulated inlier.
  for (std::size_t i = 0; i < b0.size(); ++i) {
    if (!r.inliers[i]) continue;
    const auto p = Triangulate(Se3Pose(), r.t_10, b0[i], b1[i], 0.0);
    ASSERT_TRUE(p.has_value());
    EXPECT_GT(p->z(), 0.0);
    EXPECT_GT((r.t_10 * *p).z(), 0.0);
  }
}

TEST(InitMonocular, ZeroMotionRetries) {
  const CameraModel cam = PinholeCamera();
  Rng rng(20);
  std::vector<Vec3> b;
  for (int i = 0; i < 100; ++i) {
    const Vec3 p = RandomVisiblePoint(rng, cam, 2.0, 6.0);
    b.push_back(p / p.z());
  }
  EXPECT_EQ(InitMonocular(b, b, cam, InitOptions{}, rng).status, InitStatus::kRetry);
}

TEST(InitMonocular, TooFewMatchesRetries) {
  const CameraModel cam = PinholeCamera();
  Rng rng(21);
  std::vector<Vec3> b(30, Vec3(0, 0, 1));
  EXPECT_EQ(InitMonocular(b, b, cam, InitOptions{}, rng).status, InitStatus::kRetry);
}

TEST(MotionModel, ConstantVelocityScaledByTimeStep) {
  MotionModel m;
  const Se3Pose p0;
  const Se3Pose v(ExpSO3(Vec3(0, 0.02, 0)), Vec3(0.1, 0, 0));
  m.Update(p0, 0.0);
  EXPECT_TRUE(m.valid());
  m.Update(p0 * v, 0.05);
  const Se3Pose pred = m.Predict(0.10);
  const Se3Pose expect = p0 * v * v;
  EXPECT_LT(RotationDistance(pred, expect), 1e-12);
  EXPECT_LT((pred.translation() - expect.translation()).norm(), 1e-12);
  // Twice the time step gives twice the increment.
  const Se3Pose pred2 = m.Predict(0.15);
  const Se3Pose expect2 = p0 * v * v * v;
  EXPECT_LT((pred2.translation() - expect2.translation()).norm(), 1e-9);
  m.Reset();
  EXPECT_FALSE(m.valid());
}

TEST(Relocalize, MatchesDescriptorsAgainstLastKeyframe) {
  const CameraModel cam = PinholeCamera();
  Rng rng(22);
  MapSnapshot snap;
  std::vector<Vec3> pts;
  for (int i = 0; i < 150; ++i) pts.push_back(RandomVisiblePoint(rng, cam, 2, 8));
  snap.last_kf_keypoints = KeypointsFromPoints(cam, Se3Pose(), pts);
  for (Keypoint& k : snap.last_kf_keypoints) {
    k.has_desc = true;
    for (auto& w : k.desc.bits) w = rng.Next();
    snap.tracks[k.id] = {k.id, pts[k.id]};
  }
  const Se3Pose truth_wc(ExpSO3(Vec3(0.02, 0.1, 0)), Vec3(0.2, 0.05, 0.1));
  std::vector<Keypoint> cur = KeypointsFromPoints(cam, truth_wc.inverse(), pts);
  for (Keypoint& c : cur) {
    c.has_desc = true;
    c.desc = FindKeypoint(snap.last_kf_keypoints, c.id)->desc;
    c.desc.bits[0] ^= 0x1011;  // a few flipped bits
    c.id += 1000;              // fresh track ids
  }
  const RelocResult r = Relocalize(cur, snap, cam, RelocOptions{}, rng);
  ASSERT_TRUE(r.success);
  EXPECT_LT(RotationDistance(r.pose_wc, truth_wc), 1e-6);
  EXPECT_GT(r.matches.size(), 100u);
}

}  // namespace
}  // namespace vslam
