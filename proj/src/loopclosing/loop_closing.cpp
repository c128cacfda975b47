#include "vslam/loopclosing/loop_closing.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <mutex>
#include <shared_mutex>

#include <Eigen/Dense>

#include "vslam/common/log.hpp"
#include "vslam/imgproc/features.hpp"

namespace vslam {

LcFeatures ExtractLcFeatures(const ImagePyramid& pyramid, const LcFeatureOptions& options) {
  LcFeatures out;
  if (pyramid.num_levels() == 0) return out;
  const std::vector<Corner> corners = DetectFast(pyramid.level(0), options.fast_threshold, options.border);
  const int n = std::min<int>(options.count, static_cast<int>(corners.size()));
  for (int i = 0; i < n; ++i) {
    out.px.push_back(corners[i].px);
    out.descriptors.push_back(ComputeBrief(pyramid, corners[i].px));
  }
  return out;
}

std::vector<BriefDescriptor> LcDescriptors(const Keyframe& kf, const LcFeatures& extra) {
  std::vector<BriefDescriptor> out;
  for (const Keypoint& kp : kf.keypoints) {
    if (kp.has_desc) out.push_back(kp.desc);
  }
  out.insert(out.end(), extra.descriptors.begin(), extra.descriptors.end());
  return out;
}

namespace {

struct LcFeature {
  Vec3 bearing;
  Vec2 undist;
  const BriefDescriptor* desc;
  KeypointId kp = kInvalidId;  // SLAM keypoint, else an extra feature
  PointId point = kInvalidId;
};

std::vector<LcFeature> GatherFeatures(const Keyframe& kf, const LcFeatures& extra, const CameraModel& cam) {
  std::vector<LcFeature> out;
  for (const Keypoint& kp : kf.keypoints) {
    if (kp.has_desc) out.push_back({kp.bearing, kp.undist_px, &kp.desc, kp.id, kp.map_point_id});
  }
  for (std::size_t i = 0; i < extra.px.size(); ++i) {
    const Vec2 u = cam.Undistort(extra.px[i]);
    out.push_back({cam.Unproject(u), u, &extra.descriptors[i], kInvalidId, kInvalidId});
  }
  return out;
}

}  // namespace

VerifiedLoop VerifyCandidate(const Map& map, KeyframeId kf_i, const LcFeatures& extra_i,
                             KeyframeId kf_lc, const LcFeatures& extra_lc,
                             const VerifyOptions& options, Rng& rng) {
  VerifiedLoop out;
  const Keyframe* ki = map.GetKeyframe(kf_i);
  const Keyframe* kl = map.GetKeyframe(kf_lc);
  if (!ki || !kl) return out;
  const CameraModel& cam = map.camera();
  const std::vector<LcFeature> fi = GatherFeatures(*ki, extra_i, cam);
  const std::vector<LcFeature> fl = GatherFeatures(*kl, extra_lc, cam);

  // (1) Brute-force 2-NN with ratio test, one-to-one on the K_lc side.
  std::vector<int> match_of_l(fl.size(), -1), dist_of_l(fl.size(), 257);
  for (std::size_t a = 0; a < fi.size(); ++a) {
    int best = 257, second = 257, best_j = -1;
    for (std::size_t j = 0; j < fl.size(); ++j) {
      const int d = HammingDistance(*fi[a].desc, *fl[j].desc);
      if (d < best) {
        second = best;
        best = d;
        best_j = static_cast<int>(j);
      } else if (d < second) {
        second = d;
      }
    }
    if (best_j < 0 || best >= options.ratio * second) continue;
    if (best < dist_of_l[best_j]) {
      dist_of_l[best_j] = best;
      match_of_l[best_j] = static_cast<int>(a);
    }
  }
  std::vector<std::pair<int, int>> matches;  // (fi, fl)
  for (std::size_t j = 0; j < fl.size(); ++j) {
    if (match_of_l[j] >= 0) matches.emplace_back(match_of_l[j], static_cast<int>(j));
  }
  std::sort(matches.begin(), matches.end());
  if (static_cast<int>(matches.size()) < options.min_matches) return out;

  // (2) Epipolar consistency.
  out.stage = VerifyStage::kEssential;
  std::vector<Vec3> ba, bb;
  for (const auto& [a, j] : matches) {
    ba.push_back(fl[j].bearing);
    bb.push_back(fi[a].bearing);
  }
  const EssentialRansacResult e = EstimateEssentialRansac(ba, bb, cam, options.ransac, rng);
  if (!e.success || e.num_inliers < options.min_matches) return out;

  // (3) P3P on K_lc's landmarks.
  out.stage = VerifyStage::kP3P;
  std::vector<PoseObservation> obs;
  std::vector<int> obs_feature;  // fi index
  std::vector<PointId> obs_point;
  std::set<PointId> used_points;
  for (std::size_t m = 0; m < matches.size(); ++m) {
    if (!e.inliers[m]) continue;
    const LcFeature& l = fl[matches[m].second];
    const MapPoint* p = l.point != kInvalidId ? map.GetPoint(l.point) : nullptr;
    if (!p || used_points.count(p->id)) continue;
    obs.push_back({fi[matches[m].first].undist, p->position});
    obs_feature.push_back(matches[m].first);
    obs_point.push_back(p->id);
    used_points.insert(p->id);
  }
  if (static_cast<int>(obs.size()) < options.min_p3p_inliers) return out;
  std::vector<bool> p3p_inliers;
  RansacOptions p3p_opts = options.ransac;
  p3p_opts.min_inliers = std::max(4, options.min_p3p_inliers);
  const auto guess = P3PFallback(obs, cam, p3p_opts, rng, &p3p_inliers);
  if (!guess) return out;
  const int num_p3p = static_cast<int>(std::count(p3p_inliers.begin(), p3p_inliers.end(), true));
  if (num_p3p < options.min_p3p_inliers) return out;

  // (4) More matches from K_lc's local map projected with the hypothesis.
  out.stage = VerifyStage::kRefinement;
  std::vector<PoseObservation> all;
  std::vector<std::pair<int, PointId>> all_pairs;
  std::vector<bool> feature_used(fi.size(), false);
  used_points.clear();
  for (std::size_t k = 0; k < obs.size(); ++k) {
    if (!p3p_inliers[k]) continue;
    all.push_back(obs[k]);
    all_pairs.emplace_back(obs_feature[k], obs_point[k]);
    feature_used[obs_feature[k]] = true;
    used_points.insert(obs_point[k]);
  }
  std::set<KeyframeId> local_kfs = {kf_lc};
  for (const auto& [n, c] : map.covisibility().Neighbours(kf_lc)) local_kfs.insert(n);
  std::set<PointId> local_points;
  for (KeyframeId k : local_kfs) {
    if (const Keyframe* kf = map.GetKeyframe(k)) {
      for (const Keypoint& kp : kf->keypoints) {
        if (kp.map_point_id != kInvalidId) local_points.insert(kp.map_point_id);
      }
    }
  }
  const Se3Pose guess_cw = guess->inverse();
  const double r2 = options.projection_radius_px * options.projection_radius_px;
  for (PointId pid : local_points) {
    if (used_points.count(pid)) continue;
    const MapPoint* p = map.GetPoint(pid);
    if (!p || p->descriptors.empty()) continue;
    const auto px = cam.ProjectUndistorted(guess_cw * p->position);
    if (!px) continue;
    int best = options.max_descriptor_distance + 1, best_a = -1;
    for (std::size_t a = 0; a < fi.size(); ++a) {
      if (feature_used[a] || (fi[a].undist - *px).squaredNorm() > r2) continue;
      for (const BriefDescriptor& d : p->descriptors) {
        const int dist = HammingDistance(d, *fi[a].desc);
        if (dist < best) {
          best = dist;
          best_a = static_cast<int>(a);
        }
      }
    }
    if (best_a < 0) continue;
    feature_used[best_a] = true;
    all.push_back({fi[best_a].undist, p->position});
    all_pairs.emplace_back(best_a, pid);
  }

  // (5) Robust refinement.
  PoseOptions pose_opts;
  pose_opts.min_inliers = 4;
  const PoseResult pose = EstimatePose(all, cam, *guess, pose_opts);
  out.num_inliers = pose.status == PoseStatus::kOk ? pose.num_inliers : 0;
  if (pose.status != PoseStatus::kOk || pose.num_inliers < options.min_inliers) return out;
  out.stage = VerifyStage::kAccepted;
  out.accepted = true;
  out.pose_wc = pose.pose_wc;
  for (std::size_t k = 0; k < all.size(); ++k) {
    if (pose.inliers[k] && fi[all_pairs[k].first].kp != kInvalidId) {
      out.point_matches.emplace_back(fi[all_pairs[k].first].kp, all_pairs[k].second);
    }
  }
  return out;
}

int PoseGraph::Add(KeyframeId id, const Se3Pose& pose_wc, bool is_fixed) {
  ids.push_back(id);
  poses_wc.push_back(pose_wc);
  fixed.push_back(is_fixed);
  return static_cast<int>(ids.size()) - 1;
}

PoseGraphResidual LinearizeEdge(const PoseGraph& graph, const PoseGraphEdge& edge) {
  PoseGraphResidual out;
  const Se3Pose& ta = graph.poses_wc[edge.a];
  const Se3Pose& tb = graph.poses_wc[edge.b];
  out.e = (edge.z_ab.inverse() * ta.inverse() * tb).Log();
  const Mat6 ad = SmallAdjoint(out.e);
  const Mat6 jr_inv = Mat6::Identity() + 0.5 * ad + (1.0 / 12.0) * ad * ad;
  out.d_b = jr_inv;
  out.d_a = -jr_inv * (tb.inverse() * ta).Adjoint();
  return out;
}

double PoseGraphCost(const PoseGraph& graph) {
  double c = 0.0;
  for (const PoseGraphEdge& e : graph.edges) {
    c += e.weight * (e.z_ab.inverse() * graph.poses_wc[e.a].inverse() * graph.poses_wc[e.b]).Log().squaredNorm();
  }
  return c;
}

PgoResult OptimizePoseGraph(PoseGraph& graph, const PgoOptions& options) {
  PgoResult result;
  std::vector<int> index(graph.ids.size(), -1);
  int n = 0;
  for (std::size_t i = 0; i < graph.ids.size(); ++i) {
    if (!graph.fixed[i]) index[i] = n++;
  }
  double cost = PoseGraphCost(graph);
  result.initial_cost = cost;
  result.final_cost = cost;
  if (n == 0) {
    result.converged = true;
    return result;
  }
  double lambda = -1.0, max_lambda = 0.0;
  while (result.iterations < options.max_iterations) {
    ++result.iterations;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(6 * n, 6 * n);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(6 * n);
    for (const PoseGraphEdge& e : graph.edges) {
      const PoseGraphResidual r = LinearizeEdge(graph, e);
      const std::pair<int, const Mat6*> blocks[2] = {{index[e.a], &r.d_a}, {index[e.b], &r.d_b}};
      for (const auto& [i, ji] : blocks) {
        if (i < 0) continue;
        b.segment<6>(6 * i) -= e.weight * ji->transpose() * r.e;
        for (const auto& [j, jj] : blocks) {
          if (j >= 0) h.block<6, 6>(6 * i, 6 * j) += e.weight * ji->transpose() * *jj;
        }
      }
    }
    if (lambda < 0.0) {
      lambda = options.initial_lambda * std::max(h.diagonal().maxCoeff(), 1e-12);
      max_lambda = lambda * 1e12;
    }
    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd damped = h;
      damped.diagonal().array() += lambda;
      const Eigen::VectorXd dx = damped.ldlt().solve(b);
      if (dx.norm() < options.min_update) {
        result.converged = true;
        result.final_cost = cost;
        return result;
      }
      const std::vector<Se3Pose> saved = graph.poses_wc;
      for (std::size_t i = 0; i < graph.ids.size(); ++i) {
        if (index[i] >= 0) graph.poses_wc[i] = graph.poses_wc[i] * Se3Pose::Exp(dx.segment<6>(6 * index[i]));
      }
      const double trial = PoseGraphCost(graph);
      if (trial < cost) {
        cost = trial;
        lambda /= 3.0;
        accepted = true;
      } else {
        graph.poses_wc = saved;
        lambda *= 10.0;
        if (lambda > max_lambda) {
          result.diverged = cost > 1e-24;
          result.converged = !result.diverged;
          result.final_cost = cost;
          return result;
        }
      }
    }
  }
  result.final_cost = cost;
  return result;
}

namespace {

bool SamePose(const Se3Pose& a, const Se3Pose& b) {
  return a.translation() == b.translation() && a.quaternion().coeffs() == b.quaternion().coeffs();
}

}  // namespace

CorrectionStats ApplyCorrections(Map& map, const std::map<KeyframeId, Se3Pose>& old_wc,
                                 const std::map<KeyframeId, Se3Pose>& new_wc, KeyframeId kf_i,
                                 const std::vector<std::pair<KeypointId, PointId>>& point_matches) {
  CorrectionStats stats;
  auto correct = [&](KeyframeId id, const Se3Pose& old_pose, const Se3Pose& new_pose) {
    const Keyframe* kf = map.GetKeyframe(id);
    if (!kf || SamePose(old_pose, new_pose)) return false;
    const Se3Pose target = SamePose(kf->pose_wc, old_pose) ? new_pose : new_pose * old_pose.inverse() * kf->pose_wc;
    map.SetKeyframePose(id, target);
    return true;
  };
  for (const auto& [id, pose] : new_wc) {
    auto it = old_wc.find(id);
    if (it != old_wc.end() && correct(id, it->second, pose)) ++stats.corrected_keyframes;
  }
  const auto oi = old_wc.find(kf_i);
  const auto ni = new_wc.find(kf_i);
  if (oi == old_wc.end() || ni == new_wc.end()) return stats;
  const Se3Pose c_i = ni->second * oi->second.inverse();
  if (!SamePose(oi->second, ni->second)) {
    std::vector<KeyframeId> newer;
    for (auto it = map.keyframes().upper_bound(kf_i); it != map.keyframes().end(); ++it) {
      if (!new_wc.count(it->first)) newer.push_back(it->first);
    }
    for (KeyframeId id : newer) {
      map.SetKeyframePose(id, c_i * map.GetKeyframe(id)->pose_wc);
      ++stats.propagated_keyframes;
    }
  }

  Keyframe* ki = map.GetKeyframe(kf_i);
  for (const auto& [kp_id, point] : point_matches) {
    if (!ki || !map.GetPoint(point)) continue;
    const Keypoint* kp = ki->Find(kp_id);
    if (!kp || kp->map_point_id == point) continue;
    if (kp->map_point_id != kInvalidId) {
      const PointId own = kp->map_point_id;
      map.MergePoints(std::min(own, point), std::max(own, point));
      ++stats.merged_points;
    } else if (!map.GetPoint(point)->observers.count(kf_i) && map.AddObservation(point, kf_i, kp_id)) {
      ++stats.added_observations;
    }
  }
  if (stats.corrected_keyframes > 0) map.PushCorrection(c_i);
  return stats;
}

BaProblem BuildLooseBa(const Map& map, const std::set<KeyframeId>& corrected,
                       const std::optional<StereoRig>& rig) {
  return BuildBaProblem(map, corrected, rig, false);
}

LooseBaStats CommitLooseBa(Map& map, const BaProblem& problem, const BaResult& result) {
  LooseBaStats stats;
  KeyframeId newest = kInvalidId;
  for (const BaPose& p : problem.poses) {
    if (!p.fixed && map.HasKeyframe(p.id)) newest = std::max(newest, p.id);
  }
  const std::optional<Se3Pose> before =
      newest == kInvalidId ? std::nullopt : std::optional<Se3Pose>(map.GetKeyframe(newest)->pose_wc);
  const BaCommitStats c = CommitBa(map, problem, result);
  stats.applied = c.applied;
  stats.removed_observations = c.removed_observations;
  if (!c.applied || !before) return stats;
  const Se3Pose change = map.GetKeyframe(newest)->pose_wc * before->inverse();
  std::set<KeyframeId> in_problem;
  for (const BaPose& p : problem.poses) in_problem.insert(p.id);
  std::vector<KeyframeId> newer;
  for (auto it = map.keyframes().upper_bound(newest); it != map.keyframes().end(); ++it) {
    if (!in_problem.count(it->first)) newer.push_back(it->first);
  }
  for (KeyframeId id : newer) {
    map.SetKeyframePose(id, change * map.GetKeyframe(id)->pose_wc);
    ++stats.propagated_keyframes;
  }
  map.PushCorrection(change);
  return stats;
}

std::string LoopEvent::ToLine() const {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "LOOP %lld %lld %d %.6f %.6f", static_cast<long long>(kf_i),
                static_cast<long long>(kf_lc), inliers, pre_gap, post_gap);
  return buf;
}

LoopCloser::LoopCloser(const LoopCloserOptions& options, const std::optional<StereoRig>& rig)
    : options_(options), rig_(rig), detector_(options.detector), rng_(options.seed, 0x4c43) {}

std::optional<LoopEvent> LoopCloser::Process(Map& map, KeyframeId kf) {
  std::shared_ptr<const ImagePyramid> pyramid;
  Keyframe copy;
  {
    std::shared_lock lock(map.mutex());
    const Keyframe* k = map.GetKeyframe(kf);
    if (!k) return std::nullopt;
    pyramid = k->pyramid;
    copy.keypoints = k->keypoints;
  }
  LcFeatures& feats = features_[kf];
  if (pyramid) feats = ExtractLcFeatures(*pyramid, options_.features);
  const LoopQuery q = detector_.UpdateAndQuery(kf, LcDescriptors(copy, feats));
  if (!q.candidate) return std::nullopt;
  const KeyframeId lc = *q.candidate;
  if (!features_.count(lc)) return std::nullopt;

  VerifiedLoop v;
  PoseGraph graph;
  std::map<KeyframeId, Se3Pose> old_wc;
  {
    std::shared_lock lock(map.mutex());
    if (!map.HasKeyframe(lc) || !map.HasKeyframe(kf)) return std::nullopt;
    // Loops already connected through shared landmarks are not closed again.
    if (map.covisibility().Count(kf, lc) > 0) return std::nullopt;
    v = VerifyCandidate(map, kf, feats, lc, features_[lc], options_.verify, rng_);
    if (!v.accepted) return std::nullopt;
    for (auto it = map.keyframes().lower_bound(lc); it != map.keyframes().end() && it->first <= kf; ++it) {
      old_wc[it->first] = it->second.pose_wc;
    }
  }
  {
    std::unique_lock lock(map.mutex());
    map.Lock(lc);
    map.Lock(kf);
  }
  const Se3Pose z_loop = old_wc.at(lc).inverse() * v.pose_wc;
  LoopEvent event;
  event.kf_i = kf;
  event.kf_lc = lc;
  event.inliers = v.num_inliers;
  event.pre_gap = (old_wc.at(kf).translation() - v.pose_wc.translation()).norm();

  // Chain lc..kf with the pre-correction relative poses; kf is held at the
  // verified pose, which makes the loop edge a hard constraint.
  int prev = -1;
  for (const auto& [id, pose] : old_wc) {
    const int idx = graph.Add(id, id == kf ? v.pose_wc : pose, id == lc || id == kf);
    if (prev >= 0) {
      graph.edges.push_back({prev, idx, old_wc.at(graph.ids[prev]).inverse() * pose, 1.0});
    }
    prev = idx;
  }
  graph.edges.push_back({0, static_cast<int>(graph.ids.size()) - 1, z_loop, 1.0});
  const PgoResult pgo = OptimizePoseGraph(graph, options_.pgo);
  auto unlock = [&] {
    std::unique_lock lock(map.mutex());
    map.Unlock(lc);
    map.Unlock(kf);
  };
  if (pgo.diverged) {
    LogInfo("loop " + std::to_string(kf) + "-" + std::to_string(lc) + " abandoned: pose graph diverged");
    unlock();
    return std::nullopt;
  }
  std::map<KeyframeId, Se3Pose> new_wc;
  for (std::size_t i = 0; i < graph.ids.size(); ++i) new_wc[graph.ids[i]] = graph.poses_wc[i];

  std::set<KeyframeId> corrected;
  {
    std::unique_lock lock(map.mutex());
    ApplyCorrections(map, old_wc, new_wc, kf, v.point_matches);
    for (auto it = map.keyframes().upper_bound(lc); it != map.keyframes().end(); ++it) {
      corrected.insert(it->first);
    }
  }
  if (options_.run_loose_ba && !corrected.empty()) {
    BaProblem problem;
    {
      std::shared_lock lock(map.mutex());
      problem = BuildLooseBa(map, corrected, rig_);
    }
    const BaResult r = SolveBa(problem, options_.loose_ba);
    std::unique_lock lock(map.mutex());
    CommitLooseBa(map, problem, r);
  }
  {
    std::shared_lock lock(map.mutex());
    const Keyframe* ki = map.GetKeyframe(kf);
    const Keyframe* kl = map.GetKeyframe(lc);
    if (ki && kl) event.post_gap = (ki->pose_wc.translation() - (kl->pose_wc * z_loop).translation()).norm();
  }
  unlock();
  detector_.ResetConsistency();
  ++num_closures_;
  return event;
}

}  // namespace vslam
