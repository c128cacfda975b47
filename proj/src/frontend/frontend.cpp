#include "vslam/frontend/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vslam/common/log.hpp"
#include "vslam/geometry/p3p.hpp"
#include "vslam/geometry/triangulation.hpp"

namespace vslam {

TrackResult TrackFrame(const Frame& prev, const ImagePyramid& cur, const Se3Pose& predicted_pose_wc,
                       const MapSnapshot& map, const CameraModel& camera,
                       const TrackOptions& options) {
  TrackResult result;
  const ImagePyramid& pp = *prev.pyramid;
  const Se3Pose pose_cw = predicted_pose_wc.inverse();
  auto backward_ok = [&](const Vec2& tracked, const Vec2& origin) {
    const auto back = LkTrack(cur, pp, tracked, origin, 0, 0, options.lk);
    return back && (*back - origin).norm() <= options.backward_threshold_px;
  };

  result.keypoints.reserve(prev.keypoints.size());
  for (const Keypoint& kp : prev.keypoints) {
    std::optional<Vec2> found;
    if (const auto* tp = map.Find(kp.id)) {
      ++result.stage1_attempts;
      const auto guess = camera.ProjectDistorted(pose_cw * tp->position);
      if (guess && camera.InImage(*guess)) {
        found = LkTrack(pp, cur, kp.raw_px, *guess, options.stage1_first_level, 0, options.lk);
        if (found && !backward_ok(*found, kp.raw_px)) found.reset();
      }
      if (found) ++result.stage1_survivors;
    }
    if (!found) {
      found = LkTrack(pp, cur, kp.raw_px, kp.raw_px, options.full_first_level, 0, options.lk);
      if (found && !backward_ok(*found, kp.raw_px)) found.reset();
    }
    if (!found) continue;
    Keypoint out = kp;
    out.SetRaw(camera, *found);
    out.is_stereo = false;
    result.keypoints.push_back(out);
  }
  if (result.stage1_attempts > 0) {
    result.stage1_ratio = static_cast<double>(result.stage1_survivors) / result.stage1_attempts;
  }
  return result;
}

EpipolarFilterResult FilterEpipolar(std::span<const Keypoint> reference,
                                    std::span<const Keypoint> current, const CameraModel& camera,
                                    const RansacOptions& options, Rng& rng) {
  EpipolarFilterResult r;
  r.keep.assign(current.size(), true);
  std::vector<Vec3> a3, b3;
  std::vector<int> idx3;
  std::vector<int> idx2;
  std::vector<const Keypoint*> ref_of(current.size(), nullptr);
  std::vector<Keypoint> ref_sorted(reference.begin(), reference.end());
  for (std::size_t i = 0; i < current.size(); ++i) {
    const Keypoint* ref = FindKeypoint(ref_sorted, current[i].id);
    if (!ref) continue;
    ref_of[i] = ref;
    if (current[i].is_3d) {
      a3.push_back(ref->bearing);
      b3.push_back(current[i].bearing);
      idx3.push_back(static_cast<int>(i));
    } else {
      idx2.push_back(static_cast<int>(i));
    }
  }
  r.num_3d = static_cast<int>(idx3.size());
  if (r.num_3d < 5) {
    r.passthrough = true;
    LogDebug("epipolar filter: fewer than 5 3D keypoints, skipped");
    return r;
  }
  const EssentialRansacResult e = EstimateEssentialRansac(a3, b3, camera, options, rng);
  if (!e.success) return r;
  r.ransac_ok = true;
  for (std::size_t k = 0; k < idx3.size(); ++k) {
    if (!e.inliers[k]) {
      r.keep[idx3[k]] = false;
      ++r.removed;
    }
  }
  for (int i : idx2) {
    if (EpipolarDistance(e.essential, ref_of[i]->bearing, current[i].bearing, camera) >
        options.threshold_px) {
      r.keep[i] = false;
      ++r.removed;
    }
  }
  return r;
}

namespace {

struct PoseLmState {
  double cost = 0.0;
  Mat6 h = Mat6::Zero();
  Vec6 g = Vec6::Zero();
};

double HuberCost(double s2, double delta) {
  const double s = std::sqrt(s2);
  return s <= delta ? s2 : 2.0 * delta * s - delta * delta;
}

double EvaluatePose(std::span<const PoseObservation> obs, const std::vector<bool>& mask,
                    const CameraModel& camera, const Se3Pose& pose_wc, double delta,
                    PoseLmState* state) {
  const Se3Pose pose_cw = pose_wc.inverse();
  double cost = 0.0;
  if (state) {
    state->h.setZero();
    state->g.setZero();
  }
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (!mask[i]) continue;
    const Vec3 pc = pose_cw * obs[i].point_w;
    if (pc.z() <= kMinDepth) {
      cost += HuberCost(1e4, delta);
      continue;
    }
    const Vec2 r = obs[i].undist_px - *camera.ProjectUndistorted(pc);
    const double s2 = r.squaredNorm();
    cost += HuberCost(s2, delta);
    if (!state) continue;
    const double s = std::sqrt(s2);
    const double w = s <= delta ? 1.0 : delta / s;
    Eigen::Matrix<double, 3, 6> dpc;
    dpc.leftCols<3>() = -Mat3::Identity();
    dpc.rightCols<3>() = Hat(pc);
    const Mat26 j = -camera.ProjectionJacobian(pc) * dpc;
    state->h.noalias() += w * j.transpose() * j;
    state->g.noalias() += w * j.transpose() * r;
  }
  if (state) state->cost = cost;
  return cost;
}

// Returns false on divergence (5 consecutive rejected steps away from a
// stationary point).
bool OptimizePose(std::span<const PoseObservation> obs, const std::vector<bool>& mask,
                  const CameraModel& camera, double delta, int max_iterations, Se3Pose& pose_wc,
                  double& cost) {
  PoseLmState st;
  cost = EvaluatePose(obs, mask, camera, pose_wc, delta, &st);
  double lambda = 1e-4 * st.h.diagonal().maxCoeff();
  int rejections = 0;
  for (int it = 0; it < max_iterations; ++it) {
    const Vec6 step = (st.h + lambda * Mat6::Identity()).ldlt().solve(-st.g);
    if (!step.allFinite()) return false;
    if (step.norm() < 1e-10) return true;
    const Se3Pose candidate = pose_wc * Se3Pose::Exp(step);
    const double new_cost = EvaluatePose(obs, mask, camera, candidate, delta, nullptr);
    if (new_cost < cost) {
      const double decrease = cost - new_cost;
      pose_wc = candidate;
      cost = EvaluatePose(obs, mask, camera, pose_wc, delta, &st);
      lambda = std::max(lambda / 3.0, 1e-12);
      rejections = 0;
      if (decrease < 1e-12 * std::max(1.0, cost)) return true;
    } else {
      lambda *= 10.0;
      if (++rejections >= 5) {
        // Still moving by a meaningful amount: no descent direction found.
        return step.norm() < 1e-6;
      }
    }
  }
  return true;
}

int CullChi2(std::span<const PoseObservation> obs, const CameraModel& camera, const Se3Pose& pose_wc,
             double chi2, std::vector<bool>& mask) {
  const Se3Pose pose_cw = pose_wc.inverse();
  int n = 0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (!mask[i]) continue;
    const Vec3 pc = pose_cw * obs[i].point_w;
    if (pc.z() <= kMinDepth ||
        (obs[i].undist_px - *camera.ProjectUndistorted(pc)).squaredNorm() > chi2) {
      mask[i] = false;
    } else {
      ++n;
    }
  }
  return n;
}

}  // namespace

PoseResult EstimatePose(std::span<const PoseObservation> observations, const CameraModel& camera,
                        const Se3Pose& initial_wc, const PoseOptions& options) {
  PoseResult r;
  r.pose_wc = initial_wc;
  r.inliers.assign(observations.size(), true);
  if (static_cast<int>(observations.size()) < std::max(4, options.min_inliers)) return r;

  double cost = 0.0;
  if (!OptimizePose(observations, r.inliers, camera, options.huber_delta, options.max_iterations,
                    r.pose_wc, cost)) {
    r.status = PoseStatus::kDiverged;
    return r;
  }
  r.num_inliers = CullChi2(observations, camera, r.pose_wc, options.chi2_threshold, r.inliers);
  if (r.num_inliers < std::max(4, options.min_inliers)) return r;
  if (!OptimizePose(observations, r.inliers, camera, options.huber_delta, options.max_iterations,
                    r.pose_wc, cost)) {
    r.status = PoseStatus::kDiverged;
    return r;
  }
  r.num_inliers = CullChi2(observations, camera, r.pose_wc, options.chi2_threshold, r.inliers);
  r.final_cost = cost;
  r.status = r.num_inliers >= std::max(4, options.min_inliers) ? PoseStatus::kOk
                                                               : PoseStatus::kInsufficientPoints;
  return r;
}

std::optional<Se3Pose> P3PFallback(std::span<const PoseObservation> observations,
                                   const CameraModel& camera, const RansacOptions& options,
                                   Rng& rng, std::vector<bool>* inliers) {
  std::vector<Vec3> pts;
  std::vector<Vec2> px;
  pts.reserve(observations.size());
  px.reserve(observations.size());
  for (const auto& o : observations) {
    pts.push_back(o.point_w);
    px.push_back(o.undist_px);
  }
  const P3PRansacResult r = EstimatePoseP3PRansac(pts, px, camera, options, rng);
  if (!r.success) return std::nullopt;
  if (inliers) *inliers = r.inliers;
  return r.pose_cw.inverse();
}

KeyframeDecision DecideKeyframe(std::span<const Keypoint> kf_keypoints,
                                std::span<const Keypoint> cur_keypoints, const Mat3& r_cur_kf,
                                const CameraModel& camera, const KeyframeOptions& options) {
  KeyframeDecision d;
  d.live_keypoints = static_cast<int>(cur_keypoints.size());
  std::vector<Keypoint> cur(cur_keypoints.begin(), cur_keypoints.end());
  int kf3d = 0, tracked3d = 0, common = 0;
  double parallax = 0.0;
  for (const Keypoint& k : kf_keypoints) {
    const Keypoint* c = FindKeypoint(cur, k.id);
    if (k.is_3d) {
      ++kf3d;
      if (c && c->is_3d) ++tracked3d;
    }
    if (!c) continue;
    const Vec3 rotated = r_cur_kf * k.bearing;
    if (rotated.z() <= kMinDepth) continue;
    const Vec2 px = camera.NormalizedToPixel(rotated.head<2>() / rotated.z());
    parallax += (px - c->undist_px).norm();
    ++common;
  }
  d.tracked_ratio = kf3d > 0 ? static_cast<double>(tracked3d) / kf3d : 1.0;
  d.mean_parallax_px = common > 0 ? parallax / common : 0.0;
  d.create = d.tracked_ratio < options.min_tracked_ratio ||
             d.mean_parallax_px > options.max_parallax_px ||
             d.live_keypoints < options.min_keypoint_fraction * options.num_cells;
  return d;
}

InitResult InitMonocular(std::span<const Vec3> bearings0, std::span<const Vec3> bearings1,
                         const CameraModel& camera, const InitOptions& options, Rng& rng) {
  InitResult r;
  const int n = static_cast<int>(bearings0.size());
  r.inliers.assign(n, false);
  if (n < options.min_matches) return r;
  const EssentialRansacResult e =
      EstimateEssentialRansac(bearings0, bearings1, camera, options.ransac, rng);
  if (!e.success || e.num_inliers < options.min_matches) return r;
  const RelativePose rel = RecoverPose(e.essential, bearings0, bearings1, e.inliers);
  const Se3Pose pose0_cw;
  const Se3Pose& pose1_cw = rel.t_ba;
  int good = 0;
  for (int i = 0; i < n; ++i) {
    if (!e.inliers[i]) continue;
    if (Triangulate(pose0_cw, pose1_cw, bearings0[i], bearings1[i], options.min_parallax_deg)) {
      r.inliers[i] = true;
      ++good;
    }
  }
  r.num_triangulated = good;
  if (good < options.min_triangulated) return r;
  r.t_10 = rel.t_ba;
  r.status = InitStatus::kOk;
  return r;
}

RelocResult Relocalize(std::span<const Keypoint> current, const MapSnapshot& map,
                       const CameraModel& camera, const RelocOptions& options, Rng& rng) {
  RelocResult r;
  struct Candidate {
    KeypointId track;
    Vec3 position;
    const BriefDescriptor* desc;
  };
  std::vector<Candidate> cands;
  for (const Keypoint& k : map.last_kf_keypoints) {
    if (!k.has_desc) continue;
    if (const auto* tp = map.Find(k.id)) cands.push_back({k.id, tp->position, &k.desc});
  }
  if (cands.size() < 4) return r;
  std::vector<PoseObservation> obs;
  std::vector<std::pair<int, KeypointId>> pairs;
  for (std::size_t i = 0; i < current.size(); ++i) {
    if (!current[i].has_desc) continue;
    int best = 257, second = 257;
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < cands.size(); ++j) {
      const int d = HammingDistance(current[i].desc, *cands[j].desc);
      if (d < best) {
        second = best;
        best = d;
        best_j = j;
      } else if (d < second) {
        second = d;
      }
    }
    if (best > options.max_distance || best >= options.ratio * second) continue;
    obs.push_back({current[i].undist_px, cands[best_j].position});
    pairs.emplace_back(static_cast<int>(i), cands[best_j].track);
  }
  if (static_cast<int>(obs.size()) < options.min_inliers) return r;
  std::vector<bool> ransac_inliers;
  const auto guess = P3PFallback(obs, camera, options.ransac, rng, &ransac_inliers);
  if (!guess) return r;
  std::vector<PoseObservation> kept;
  std::vector<std::pair<int, KeypointId>> kept_pairs;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (ransac_inliers[i]) {
      kept.push_back(obs[i]);
      kept_pairs.push_back(pairs[i]);
    }
  }
  const PoseResult pose = EstimatePose(kept, camera, *guess);
  if (pose.status != PoseStatus::kOk || pose.num_inliers < options.min_inliers) return r;
  r.success = true;
  r.pose_wc = pose.pose_wc;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (pose.inliers[i]) r.matches.push_back(kept_pairs[i]);
  }
  return r;
}

}  // namespace vslam
