#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "test_util.hpp"
#include "vslam/imgproc/features.hpp"
#include "vslam/imgproc/pyramid.hpp"
#include "vslam/loopclosing/loop_closing.hpp"

namespace vslam {
namespace {

using test::PinholeCamera;

BriefDescriptor RandomDescriptor(Rng& rng) {
  BriefDescriptor d;
  for (auto& w : d.bits) w = rng.Next();
  return d;
}

BriefDescriptor Flip(BriefDescriptor d, int bits, Rng& rng) {
  for (int i : rng.SampleDistinct(256, bits)) d.bits[i >> 6] ^= std::uint64_t{1} << (i & 63);
  return d;
}

std::vector<BriefDescriptor> RandomScene(Rng& rng, int n) {
  std::vector<BriefDescriptor> v;
  for (int i = 0; i < n; ++i) v.push_back(RandomDescriptor(rng));
  return v;
}

// A noisy partial re-observation of a scene.
std::vector<BriefDescriptor> Revisit(const std::vector<BriefDescriptor>& scene, Rng& rng) {
  std::vector<BriefDescriptor> v;
  for (const BriefDescriptor& d : scene) {
    if (rng.Uniform() < 0.7) v.push_back(Flip(d, 8, rng));
  }
  return v;
}

TEST(Vocabulary, EveryDescriptorInOneLeafAndIndexExact) {
  Rng rng(1);
  VocabularyTree tree;
  std::vector<std::vector<BriefDescriptor>> kfs;
  for (int k = 0; k < 40; ++k) {
    kfs.push_back(RandomScene(rng, 120));
    tree.AddKeyframe(k, kfs.back());
  }
  EXPECT_GT(tree.NumWords(), 1u);
  std::size_t stored = 0;
  for (const auto& [w, unused] : tree.inverted_index()) stored += tree.LeafDescriptors(w).size();
  EXPECT_EQ(stored, tree.NumDescriptors());
  EXPECT_EQ(tree.NumDescriptors(), 40u * 120u);

  // Rebuild the index from scratch.
  std::map<WordId, std::map<KeyframeId, int>> brute;
  for (int k = 0; k < 40; ++k) {
    for (const BriefDescriptor& d : kfs[k]) ++brute[tree.Lookup(d)][k];
  }
  EXPECT_EQ(brute, tree.inverted_index());
  for (const auto& [w, kf_counts] : brute) {
    EXPECT_NEAR(tree.Idf(w), std::log(40.0 / kf_counts.size()), 1e-12);
  }
}

TEST(Vocabulary, SignatureNormalizedAndSelfQueryMaximal) {
  Rng rng(2);
  VocabularyTree tree;
  for (int k = 0; k < 30; ++k) tree.AddKeyframe(k, RandomScene(rng, 150));
  for (KeyframeId k : {0, 7, 29}) {
    const BowSignature s = tree.Signature(k);
    double sum = 0.0;
    for (const auto& [w, v] : s) {
      EXPECT_GE(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_NEAR(BowSimilarity(s, s), 1.0, 1e-12);
    const auto scores = tree.Score(s);
    const auto best = std::max_element(scores.begin(), scores.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
    EXPECT_EQ(best->first, k);
    EXPECT_NEAR(best->second, 1.0, 1e-12);
  }
}

TEST(Vocabulary, Deterministic) {
  auto build = [] {
    Rng rng(3);
    VocabularyTree tree;
    for (int k = 0; k < 20; ++k) tree.AddKeyframe(k, RandomScene(rng, 200));
    return tree;
  };
  const VocabularyTree a = build();
  const VocabularyTree b = build();
  EXPECT_EQ(a.inverted_index(), b.inverted_index());
  for (KeyframeId k = 0; k < 20; ++k) EXPECT_EQ(a.Score(a.Signature(k)), b.Score(b.Signature(k)));
}

TEST(LoopDetector, RevisitOfSceneThreeRanksFirst) {
  int hits = 0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    Rng rng(100 + t);
    LoopDetectorOptions opts;
    opts.temporal_window = 0;
    opts.vocabulary.seed = t + 1;
    LoopDetector det(opts);
    std::vector<std::vector<BriefDescriptor>> scenes;
    for (int k = 0; k < 10; ++k) {
      scenes.push_back(RandomScene(rng, 300));
      det.UpdateAndQuery(k, scenes.back());
    }
    const LoopQuery q = det.UpdateAndQuery(10, Revisit(scenes[3], rng));
    if (!q.ranked.empty() && q.ranked[0].first == 3) ++hits;
  }
  EXPECT_GE(hits, 19);
}

TEST(LoopDetector, ConsecutiveKeyframeIsMasked) {
  Rng rng(4);
  LoopDetector det;
  const auto scene = RandomScene(rng, 300);
  det.UpdateAndQuery(0, scene);
  const LoopQuery q = det.UpdateAndQuery(1, scene);
  EXPECT_TRUE(q.ranked.empty());
  EXPECT_FALSE(q.candidate.has_value());
}

TEST(LoopDetector, CandidateNeedsConsistentQueries) {
  Rng rng(5);
  LoopDetector det;
  std::vector<std::vector<BriefDescriptor>> scenes;
  for (int k = 0; k < 30; ++k) {
    scenes.push_back(RandomScene(rng, 200));
    det.UpdateAndQuery(k, scenes.back());
  }
  // Random scenes score near zero against each other, so earlier queries
  // may have passed the gate with noise; start from a clean history.
  det.ResetConsistency();
  const LoopQuery first = det.UpdateAndQuery(30, Revisit(scenes[2], rng));
  ASSERT_FALSE(first.ranked.empty());
  EXPECT_EQ(first.ranked[0].first, 2);
  EXPECT_FALSE(first.candidate.has_value());
  const LoopQuery second = det.UpdateAndQuery(31, Revisit(scenes[3], rng));
  ASSERT_TRUE(second.candidate.has_value());
  EXPECT_EQ(*second.candidate, 3);
}

TEST(LcFeatures, TexturedImageGivesExactlyThreeHundred) {
  const ImagePyramid pyr = BuildPyramid(test::RandomDotImage(640, 480, 7));
  ASSERT_GE(DetectFast(pyr.level(0), 20, 16).size(), 300u);
  const LcFeatures f = ExtractLcFeatures(pyr);
  EXPECT_EQ(f.px.size(), 300u);
  EXPECT_EQ(f.descriptors.size(), 300u);
  const LcFeatures g = ExtractLcFeatures(pyr);
  EXPECT_EQ(f.descriptors, g.descriptors);
  EXPECT_EQ(f.px, g.px);
}

TEST(LcFeatures, BlankImageGivesNone) {
  const LcFeatures f = ExtractLcFeatures(BuildPyramid(GrayImage(640, 480, 90)));
  EXPECT_TRUE(f.px.empty());
  Keyframe kf;
  Keypoint kp;
  kp.has_desc = true;
  kf.keypoints.push_back(kp);
  EXPECT_EQ(LcDescriptors(kf, f).size(), 1u);
}

enum class Geometry { kGenuine, kAliased };

// K_lc (id 0) at the origin with a landmark per keypoint; K_i (id 1) sees
// the same texture but has no landmarks. In the aliased case K_i's pixels
// come from points moved along K_lc's rays, so K_lc's image and the
// epipolar geometry are unchanged while the 3D structure differs.
struct LoopScene {
  Map map;
  Se3Pose truth_i;
  int num_points = 0;
};

void MakeLoopScene(LoopScene& s, std::uint64_t seed, int n, Geometry geometry, double noise_px) {
  const CameraModel cam = PinholeCamera();
  s.map.set_camera(cam);
  Rng rng(seed);
  s.truth_i = Se3Pose(ExpSO3(Vec3(0.03, -0.05, 0.02)), Vec3(0.8, 0.1, -0.2));
  Keyframe lc, ki;
  lc.id = 0;
  ki.id = 1;
  ki.pose_wc = Se3Pose(ExpSO3(Vec3(0.0, 0.02, 0.0)), Vec3(0.5, 0.0, 0.3)) * s.truth_i;
  std::vector<double> inv_depth;
  while (static_cast<int>(lc.keypoints.size()) < n) {
    const Vec3 x = test::RandomVisiblePoint(rng, cam, 3.0, 8.0);
    Vec3 seen = x;
    if (geometry == Geometry::kAliased) {
      // Inverse scale away from 1 so no point stays consistent with the
      // true pose.
      double inv_s = 1.0;
      while (inv_s > 0.8 && inv_s < 1.25) inv_s = rng.Uniform(0.4, 2.5);
      seen /= inv_s;
    }
    const auto px_i = cam.ProjectUndistorted(s.truth_i.inverse() * seen);
    if (!px_i || px_i->x() < 20 || px_i->y() < 20 || px_i->x() > 620 || px_i->y() > 460) continue;
    const int j = static_cast<int>(lc.keypoints.size());
    Keypoint a;
    a.id = j;
    a.SetRaw(cam, *cam.ProjectUndistorted(x));
    a.has_desc = true;
    a.desc = RandomDescriptor(rng);
    Keypoint b;
    b.id = 1000 + j;
    b.SetRaw(cam, *px_i + Vec2(rng.Normal(0, noise_px), rng.Normal(0, noise_px)));
    b.has_desc = true;
    b.desc = Flip(a.desc, 6, rng);
    lc.keypoints.push_back(a);
    ki.keypoints.push_back(b);
    inv_depth.push_back(1.0 / x.z());
  }
  s.map.AddKeyframe(lc);
  s.map.AddKeyframe(ki);
  for (int j = 0; j < n; ++j) s.map.CreatePoint(0, j, inv_depth[j]);
  s.num_points = n;
}

TEST(VerifyCandidate, GenuineRevisitRecoversPose) {
  LoopScene s;
  MakeLoopScene(s, 21, 150, Geometry::kGenuine, 0.2);
  Rng rng(1);
  const VerifiedLoop v = VerifyCandidate(s.map, 1, {}, 0, {}, {}, rng);
  ASSERT_TRUE(v.accepted);
  EXPECT_EQ(v.stage, VerifyStage::kAccepted);
  const Se3Pose err = s.truth_i.inverse() * v.pose_wc;
  // Scene depth is 3 to 8 m.
  EXPECT_LT(LogSO3(err.quaternion()).norm(), 1e-3);
  EXPECT_LT(err.translation().norm(), 1e-3 * 5.0);
  EXPECT_GE(v.num_inliers, 140);
  EXPECT_GE(static_cast<int>(v.point_matches.size()), 140);
  for (const auto& [kp, point] : v.point_matches) EXPECT_EQ(kp - 1000, point - s.map.points().begin()->first);
}

TEST(VerifyCandidate, AliasedSceneRejectedAtP3P) {
  int at_p3p = 0, accepted = 0;
  for (int t = 0; t < 100; ++t) {
    LoopScene s;
    MakeLoopScene(s, 500 + t, 100, Geometry::kAliased, 0.0);
    Rng rng(t);
    const VerifiedLoop v = VerifyCandidate(s.map, 1, {}, 0, {}, {}, rng);
    if (v.accepted) ++accepted;
    if (!v.accepted && v.stage == VerifyStage::kP3P) ++at_p3p;
  }
  EXPECT_EQ(accepted, 0);
  EXPECT_EQ(at_p3p, 100);
}

TEST(VerifyCandidate, ThirtyInliersNeeded) {
  for (int n : {29, 30}) {
    LoopScene s;
    MakeLoopScene(s, 31, n, Geometry::kGenuine, 0.0);
    Rng rng(2);
    const VerifiedLoop v = VerifyCandidate(s.map, 1, {}, 0, {}, {}, rng);
    EXPECT_EQ(v.num_inliers, n);
    EXPECT_EQ(v.accepted, n >= 30) << n;
    EXPECT_EQ(v.stage, n >= 30 ? VerifyStage::kAccepted : VerifyStage::kRefinement);
  }
}

TEST(VerifyCandidate, RejectionLeavesMapUntouched) {
  LoopScene s;
  MakeLoopScene(s, 41, 29, Geometry::kGenuine, 0.0);
  const auto before = s.map.points();
  Rng rng(3);
  EXPECT_FALSE(VerifyCandidate(s.map, 1, {}, 0, {}, {}, rng).accepted);
  ASSERT_EQ(before.size(), s.map.points().size());
  for (const auto& [id, p] : before) {
    EXPECT_EQ(p.position, s.map.GetPoint(id)->position);
    EXPECT_EQ(p.observers, s.map.GetPoint(id)->observers);
  }
}

// Square loop of 16 steps returning to the start, with odometry biased by
// 2% of each step.
struct SquareGraph {
  PoseGraph graph;
  std::vector<Se3Pose> truth;
};

SquareGraph MakeSquare(std::uint64_t seed, double drift) {
  SquareGraph s;
  Rng rng(seed);
  for (int k = 0; k <= 16; ++k) {
    const int side = std::min(k / 4, 3);
    const double along = k - 4.0 * side;
    const double yaw = kPi / 2 * side;
    const Vec3 corners[4] = {Vec3(0, 0, 0), Vec3(4, 0, 0), Vec3(4, 4, 0), Vec3(0, 4, 0)};
    const Vec3 dir(std::cos(yaw), std::sin(yaw), 0);
    s.truth.emplace_back(ExpSO3(Vec3(0, 0, yaw)), corners[side] + along * dir);
  }
  s.truth[16] = s.truth[0];
  Se3Pose pose = s.truth[0];
  s.graph.Add(0, pose, true);
  for (int k = 1; k <= 16; ++k) {
    Se3Pose z = s.truth[k - 1].inverse() * s.truth[k];
    Vec6 d;
    d << Vec3(rng.Normal(), rng.Normal(), rng.Normal()).normalized() * drift * z.translation().norm(),
        Vec3(rng.Normal(), rng.Normal(), rng.Normal()) * 0.003;
    z = z * Se3Pose::Exp(d);
    pose = pose * z;
    s.graph.Add(k, pose, false);
    s.graph.edges.push_back({k - 1, k, z, 1.0});
  }
  return s;
}

// Gauss-Newton with central-difference Jacobians on the stacked residual.
std::vector<Se3Pose> DenseOracle(PoseGraph g) {
  std::vector<int> free;
  for (std::size_t i = 0; i < g.ids.size(); ++i) {
    if (!g.fixed[i]) free.push_back(static_cast<int>(i));
  }
  auto residual = [](const PoseGraph& graph) {
    Eigen::VectorXd r(6 * graph.edges.size());
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
      const PoseGraphEdge& ed = graph.edges[e];
      r.segment<6>(6 * e) = (ed.z_ab.inverse() * graph.poses_wc[ed.a].inverse() * graph.poses_wc[ed.b]).Log();
    }
    return r;
  };
  const double h = 1e-6;
  for (int it = 0; it < 50; ++it) {
    const Eigen::VectorXd r = residual(g);
    Eigen::MatrixXd j(r.size(), 6 * free.size());
    for (std::size_t f = 0; f < free.size(); ++f) {
      for (int c = 0; c < 6; ++c) {
        Vec6 d = Vec6::Zero();
        d[c] = h;
        PoseGraph plus = g, minus = g;
        plus.poses_wc[free[f]] = g.poses_wc[free[f]] * Se3Pose::Exp(d);
        minus.poses_wc[free[f]] = g.poses_wc[free[f]] * Se3Pose::Exp(-d);
        j.col(6 * f + c) = (residual(plus) - residual(minus)) / (2 * h);
      }
    }
    const Eigen::VectorXd dx = (j.transpose() * j).ldlt().solve(-j.transpose() * r);
    for (std::size_t f = 0; f < free.size(); ++f) {
      g.poses_wc[free[f]] = g.poses_wc[free[f]] * Se3Pose::Exp(dx.segment<6>(6 * f));
    }
    if (dx.norm() < 1e-12) break;
  }
  return g.poses_wc;
}

TEST(PoseGraph, ConsistentGraphNeedsNoCorrection) {
  SquareGraph s = MakeSquare(1, 0.0);
  // Noise-free odometry still carries the rotation jitter; use exact edges.
  for (PoseGraphEdge& e : s.graph.edges) e.z_ab = s.truth[e.a].inverse() * s.truth[e.b];
  for (int k = 0; k <= 16; ++k) s.graph.poses_wc[k] = s.truth[k];
  s.graph.fixed[16] = true;
  s.graph.edges.push_back({0, 16, Se3Pose(), 1.0});
  const std::vector<Se3Pose> before = s.graph.poses_wc;
  const PgoResult r = OptimizePoseGraph(s.graph);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.final_cost, 1e-18);
  for (int k = 0; k <= 16; ++k) {
    EXPECT_LT((before[k].inverse() * s.graph.poses_wc[k]).Log().norm(), 1e-12);
  }
}

TEST(PoseGraph, SquareLoopMatchesDenseOracle) {
  SquareGraph s = MakeSquare(2, 0.02);
  const double pre_gap = (s.graph.poses_wc[16].translation() - s.truth[0].translation()).norm();
  EXPECT_GT(pre_gap, 0.05);
  // The loop end is held at the verified pose.
  s.graph.poses_wc[16] = s.truth[0];
  s.graph.fixed[16] = true;
  s.graph.edges.push_back({0, 16, Se3Pose(), 1.0});
  const std::vector<Se3Pose> oracle = DenseOracle(s.graph);
  const PgoResult r = OptimizePoseGraph(s.graph);
  EXPECT_TRUE(r.converged);
  EXPECT_FALSE(r.diverged);
  EXPECT_LT(r.final_cost, r.initial_cost);
  const Se3Pose closed = s.graph.poses_wc[0] * s.graph.edges.back().z_ab;
  EXPECT_LT((s.graph.poses_wc[16].translation() - closed.translation()).norm(), 1e-6);
  for (int k = 0; k <= 16; ++k) {
    EXPECT_LT((oracle[k].inverse() * s.graph.poses_wc[k]).Log().norm(), 1e-6) << k;
  }
}

TEST(PoseGraph, JacobiansMatchFiniteDifferences) {
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    PoseGraph g;
    const Se3Pose ta = test::RandomPose(rng);
    const Se3Pose z = test::RandomPose(rng);
    Vec6 err;
    err << rng.Normal(0, 0.1), rng.Normal(0, 0.1), rng.Normal(0, 0.1), rng.Normal(0, 0.1),
        rng.Normal(0, 0.1), rng.Normal(0, 0.1);
    g.Add(0, ta, false);
    g.Add(1, ta * z * Se3Pose::Exp(err), false);
    g.edges.push_back({0, 1, z, 1.0});
    const PoseGraphResidual r = LinearizeEdge(g, g.edges[0]);
    const double h = 1e-6;
    for (int v = 0; v < 2; ++v) {
      Mat6 num;
      for (int c = 0; c < 6; ++c) {
        Vec6 d = Vec6::Zero();
        d[c] = h;
        PoseGraph plus = g, minus = g;
        plus.poses_wc[v] = g.poses_wc[v] * Se3Pose::Exp(d);
        minus.poses_wc[v] = g.poses_wc[v] * Se3Pose::Exp(-d);
        num.col(c) = (LinearizeEdge(plus, g.edges[0]).e - LinearizeEdge(minus, g.edges[0]).e) / (2 * h);
      }
      const Mat6& ana = v == 0 ? r.d_a : r.d_b;
      EXPECT_LT((ana - num).cwiseAbs().maxCoeff() / std::max(num.cwiseAbs().maxCoeff(), 1.0), 1e-3);
    }
  }
}

struct MapFixture {
  Map map;
  std::vector<Vec3> points;
  std::vector<PointId> ids;

  // Keyframe k moves along x and sees the given points.
  void Build(const std::vector<std::vector<int>>& seen, int num_points, double spacing) {
    const CameraModel cam = PinholeCamera();
    map.set_camera(cam);
    Rng rng(11);
    for (int i = 0; i < num_points; ++i) {
      const double x = spacing * i * static_cast<double>(seen.size()) / num_points;
      points.emplace_back(x + rng.Uniform(-1, 1), rng.Uniform(-1, 1), rng.Uniform(6, 9));
    }
    ids.assign(num_points, kInvalidId);
    for (std::size_t k = 0; k < seen.size(); ++k) {
      Keyframe kf;
      kf.id = static_cast<KeyframeId>(k);
      kf.pose_wc = Se3Pose(Mat3::Identity(), Vec3(spacing * k, 0, 0));
      std::vector<int> sorted = seen[k];
      std::sort(sorted.begin(), sorted.end());
      for (int i : sorted) {
        Keypoint kp;
        kp.id = i;
        kp.SetRaw(cam, *cam.ProjectUndistorted(kf.pose_cw() * points[i]));
        kf.keypoints.push_back(kp);
      }
      map.AddKeyframe(kf);
      for (int i : sorted) {
        if (ids[i] == kInvalidId) {
          ids[i] = map.CreatePoint(kf.id, i, 1.0 / (kf.pose_cw() * points[i]).z());
        } else {
          map.AddObservation(ids[i], kf.id, i);
        }
      }
    }
  }

  // Keyframe k sees blocks k - 1, k and k + 1 of `block` points.
  void BuildChain(int keyframes, int block) {
    std::vector<std::vector<int>> seen(keyframes);
    for (int k = 0; k < keyframes; ++k) {
      for (int b = std::max(0, k - 1); b <= std::min(keyframes - 1, k + 1); ++b) {
        for (int i = 0; i < block; ++i) seen[k].push_back(b * block + i);
      }
    }
    Build(seen, keyframes * block, 0.1);
  }

  std::map<KeyframeId, Se3Pose> Poses() const {
    std::map<KeyframeId, Se3Pose> out;
    for (const auto& [id, kf] : map.keyframes()) out[id] = kf.pose_wc;
    return out;
  }

  double MeanReprojection() const {
    double sum = 0.0;
    int n = 0;
    for (const auto& [id, p] : map.points()) {
      for (const auto& [kf_id, kp_id] : p.observers) {
        const Keyframe* kf = map.GetKeyframe(kf_id);
        const auto px = map.camera().ProjectUndistorted(kf->pose_cw() * p.position);
        sum += px ? (*px - kf->Find(kp_id)->undist_px).norm() : 100.0;
        ++n;
      }
    }
    return sum / n;
  }
};

TEST(ApplyCorrections, IdentityIsBitIdentical) {
  MapFixture f;
  f.BuildChain(6, 20);
  const auto poses = f.Poses();
  const auto points = f.map.points();
  const auto epoch = f.map.epoch();
  ApplyCorrections(f.map, poses, poses, 5, {});
  EXPECT_EQ(f.map.epoch(), epoch);
  for (const auto& [id, kf] : f.map.keyframes()) {
    EXPECT_EQ(kf.pose_wc.translation(), poses.at(id).translation());
    EXPECT_EQ(kf.pose_wc.quaternion().coeffs(), poses.at(id).quaternion().coeffs());
  }
  for (const auto& [id, p] : f.map.points()) {
    EXPECT_EQ(p.position, points.at(id).position);
    EXPECT_EQ(p.anchor_kf, points.at(id).anchor_kf);
    EXPECT_EQ(p.inv_depth, points.at(id).inv_depth);
  }
}

TEST(ApplyCorrections, PureTranslationMovesAnchoredPoints) {
  MapFixture f;
  f.BuildChain(6, 20);
  const auto old_wc = f.Poses();
  const auto points = f.map.points();
  const Vec3 t(0.3, -0.2, 0.1);
  std::map<KeyframeId, Se3Pose> new_wc = old_wc;
  for (KeyframeId k = 3; k <= 4; ++k) new_wc[k] = Se3Pose(Mat3::Identity(), t) * old_wc.at(k);
  const CorrectionStats stats = ApplyCorrections(f.map, old_wc, new_wc, 4, {});
  EXPECT_EQ(stats.corrected_keyframes, 2);
  EXPECT_EQ(stats.propagated_keyframes, 0);  // keyframe 5 is in new_wc unchanged
  EXPECT_EQ(f.map.epoch(), 1);
  for (const auto& [id, p] : f.map.points()) {
    const Vec3 moved = p.position - points.at(id).position;
    if (p.anchor_kf == 3 || p.anchor_kf == 4) {
      EXPECT_LT((moved - t).norm(), 1e-12);
    } else {
      EXPECT_EQ(p.position, points.at(id).position);
    }
  }
}

TEST(ApplyCorrections, NewerKeyframesFollowAndAnchorPixelsHold) {
  MapFixture f;
  f.BuildChain(8, 20);
  const auto all = f.Poses();
  Rng rng(5);
  // The closure saw keyframes up to 5; 6 and 7 arrived meanwhile.
  std::map<KeyframeId, Se3Pose> old_wc, new_wc;
  for (KeyframeId k = 0; k <= 5; ++k) {
    old_wc[k] = all.at(k);
    new_wc[k] = k == 0 ? all.at(k) : test::RandomPose(rng, 0.02 * k, 0.05 * k) * all.at(k);
  }
  const CorrectionStats stats = ApplyCorrections(f.map, old_wc, new_wc, 5, {});
  EXPECT_EQ(stats.corrected_keyframes, 5);
  EXPECT_EQ(stats.propagated_keyframes, 2);
  const Se3Pose c5 = new_wc[5] * old_wc[5].inverse();
  for (KeyframeId k : {6, 7}) {
    const Se3Pose expected = c5 * all.at(k);
    EXPECT_LT((expected.inverse() * f.map.GetKeyframe(k)->pose_wc).Log().norm(), 1e-12);
  }
  // Relative pose 5 -> 6 is preserved.
  const Se3Pose rel = f.map.GetKeyframe(5)->pose_wc.inverse() * f.map.GetKeyframe(6)->pose_wc;
  EXPECT_LT(((all.at(5).inverse() * all.at(6)).inverse() * rel).Log().norm(), 1e-12);
  for (const auto& [id, p] : f.map.points()) {
    const Keyframe* a = f.map.GetKeyframe(p.anchor_kf);
    const auto px = f.map.camera().ProjectUndistorted(a->pose_cw() * p.position);
    ASSERT_TRUE(px.has_value());
    EXPECT_LT((*px - p.anchor_px).norm(), 1e-9);
  }
}

TEST(ApplyCorrections, LoopMatchesMergeIntoOlderPoint) {
  MapFixture f;
  f.BuildChain(6, 20);
  const auto poses = f.Poses();
  // Keypoint 100 of keyframe 5 observes block 5; pretend it re-observes a
  // block-0 point of keyframe 0.
  const PointId old_point = f.ids[0];
  const PointId young_point = f.ids[100];
  const auto young_observers = f.map.GetPoint(young_point)->observers;
  const CorrectionStats stats = ApplyCorrections(f.map, poses, poses, 5, {{100, old_point}});
  EXPECT_EQ(stats.merged_points, 1);
  EXPECT_EQ(f.map.GetPoint(young_point), nullptr);
  const MapPoint* kept = f.map.GetPoint(old_point);
  ASSERT_NE(kept, nullptr);
  for (const auto& [kf, unused] : young_observers) EXPECT_TRUE(kept->observers.count(kf)) << kf;
  EXPECT_EQ(f.map.GetKeyframe(5)->Find(100)->map_point_id, old_point);
}

TEST(LooseBa, FreeSetIsLocal) {
  MapFixture f;
  f.BuildChain(100, 12);
  std::set<KeyframeId> corrected;
  for (KeyframeId k = 95; k < 100; ++k) corrected.insert(k);
  const BaProblem p = BuildLooseBa(f.map, corrected, std::nullopt);
  EXPECT_EQ(p.NumFreePoses(), 5);
  EXPECT_LT(p.poses.size(), 10u);
  EXPECT_LT(p.points.size(), f.map.points().size() / 10);
}

TEST(LooseBa, ReprojectionNoWorseThanAfterPgo) {
  MapFixture f;
  f.BuildChain(30, 15);
  Rng rng(6);
  // Residual misalignment left by a pose graph correction of 25..29.
  const auto old_wc = f.Poses();
  std::map<KeyframeId, Se3Pose> new_wc;
  std::set<KeyframeId> corrected;
  for (KeyframeId k = 25; k < 30; ++k) {
    new_wc[k] = test::RandomPose(rng, 0.002, 0.01) * old_wc.at(k);
    corrected.insert(k);
  }
  std::map<KeyframeId, Se3Pose> old_part;
  for (const auto& [k, unused] : new_wc) old_part[k] = old_wc.at(k);
  ApplyCorrections(f.map, old_part, new_wc, 29, {});
  const double after_pgo = f.MeanReprojection();
  EXPECT_GT(after_pgo, 0.1);
  BaProblem p = BuildLooseBa(f.map, corrected, std::nullopt);
  const BaResult r = SolveBa(p);
  const LooseBaStats stats = CommitLooseBa(f.map, p, r);
  EXPECT_TRUE(stats.applied);
  const double after_ba = f.MeanReprojection();
  EXPECT_LE(after_ba, after_pgo);
  EXPECT_LT(after_ba, 0.5 * after_pgo);
}

TEST(LooseBa, NoCorrectedKeyframesIsNoOp) {
  MapFixture f;
  f.BuildChain(6, 20);
  const auto poses = f.Poses();
  const auto points = f.map.points();
  BaProblem p = BuildLooseBa(f.map, {}, std::nullopt);
  EXPECT_EQ(p.NumFreePoses(), 0);
  const LooseBaStats stats = CommitLooseBa(f.map, p, SolveBa(p));
  EXPECT_EQ(stats.propagated_keyframes, 0);
  EXPECT_EQ(f.map.epoch(), 0);
  for (const auto& [id, kf] : f.map.keyframes()) {
    EXPECT_EQ(kf.pose_wc.translation(), poses.at(id).translation());
  }
  for (const auto& [id, pt] : f.map.points()) EXPECT_EQ(pt.position, points.at(id).position);
}

TEST(LoopEvent, LineFormat) {
  LoopEvent e;
  e.kf_i = 120;
  e.kf_lc = 4;
  e.inliers = 87;
  e.pre_gap = 0.25;
  e.post_gap = 0.001;
  EXPECT_EQ(e.ToLine(), "LOOP 120 4 87 0.250000 0.001000");
}

}  // namespace
}  // namespace vslam
