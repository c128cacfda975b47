#pragma once

#include <span>
#include <vector>

#include "vslam/common/random.hpp"
#include "vslam/frontend/keypoint.hpp"
#include "vslam/geometry/camera.hpp"
#include "vslam/geometry/epipolar.hpp"
#include "vslam/imgproc/lk.hpp"
#include "vslam/mapping/map.hpp"

namespace vslam {

struct TrackOptions {
  LkOptions lk;
  double backward_threshold_px = 0.5;
  int stage1_first_level = 1;
  int full_first_level = 3;
};

struct TrackResult {
  std::vector<Keypoint> keypoints;  // sorted by id, raw/undist updated
  int stage1_attempts = 0;
  int stage1_survivors = 0;
  // 1 when nothing was attempted in the first stage.
  double stage1_ratio = 1.0;
};

// Two-stage tracking of prev's keypoints into cur. Keypoints with a
// landmark in `map` are first searched around their projection under
// predicted_pose_wc on the two finest levels; failures and 2D keypoints are
// then tracked on the full pyramid from their previous position. All
// survivors pass a level-0 backward check.
TrackResult TrackFrame(const Frame& prev, const ImagePyramid& cur, const Se3Pose& predicted_pose_wc,
                       const MapSnapshot& map, const CameraModel& camera,
                       const TrackOptions& options = {});

struct EpipolarFilterResult {
  std::vector<bool> keep;  // per current keypoint
  bool ransac_ok = false;
  bool passthrough = false;  // fewer than 5 3D correspondences
  int num_3d = 0;
  int removed = 0;
};

// Essential-matrix RANSAC on 3D keypoints between a reference frame and
// the current keypoints; the resulting E then screens the 2D keypoints.
// Current keypoints without a counterpart in the reference are kept.
EpipolarFilterResult FilterEpipolar(std::span<const Keypoint> reference,
                                    std::span<const Keypoint> current, const CameraModel& camera,
                                    const RansacOptions& options, Rng& rng);

struct PoseObservation {
  Vec2 undist_px;
  Vec3 point_w;
};

struct PoseOptions {
  double huber_delta = 2.4476;  // sqrt(5.991)
  double chi2_threshold = kChi2Inv95TwoDof;
  int max_iterations = 10;
  int min_inliers = 4;
};

enum class PoseStatus { kOk, kInsufficientPoints, kDiverged };

struct PoseResult {
  PoseStatus status = PoseStatus::kInsufficientPoints;
  Se3Pose pose_wc;
  std::vector<bool> inliers;
  int num_inliers = 0;
  double final_cost = 0.0;
};

// Robust Levenberg-Marquardt on reprojection errors (Huber, unit
// covariance), chi-square cull at 95%, then one more optimization on the
// survivors and a final cull against the refined pose.
PoseResult EstimatePose(std::span<const PoseObservation> observations, const CameraModel& camera,
                        const Se3Pose& initial_wc, const PoseOptions& options = {});

// P3P inside RANSAC on 2D-3D pairs. Returns T_wc.
std::optional<Se3Pose> P3PFallback(std::span<const PoseObservation> observations,
                                   const CameraModel& camera, const RansacOptions& options,
                                   Rng& rng, std::vector<bool>* inliers = nullptr);

struct KeyframeOptions {
  double min_tracked_ratio = 0.85;
  double max_parallax_px = 15.0;
  double min_keypoint_fraction = 0.5;  // of the number of grid cells
  int num_cells = 0;
};

struct KeyframeDecision {
  bool create = false;
  double tracked_ratio = 1.0;
  double mean_parallax_px = 0.0;
  int live_keypoints = 0;
};

// Decides on a new keyframe. `kf_is_3d` and `cur_is_3d` tell which
// keypoints carry a landmark; r_cur_kf is the relative rotation between the
// keyframe and the current frame (x_cur = R x_kf).
KeyframeDecision DecideKeyframe(std::span<const Keypoint> kf_keypoints,
                                std::span<const Keypoint> cur_keypoints, const Mat3& r_cur_kf,
                                const CameraModel& camera, const KeyframeOptions& options);

struct InitOptions {
  int min_matches = 50;
  double min_parallax_deg = 1.0;
  int min_triangulated = 40;
  RansacOptions ransac;
};

enum class InitStatus { kOk, kRetry };

struct InitResult {
  InitStatus status = InitStatus::kRetry;
  Se3Pose t_10;  // second-from-first, |t| = 1
  std::vector<bool> inliers;  // per match
  int num_triangulated = 0;
};

// Two-view initialization from matched bearings (first keyframe, current).
InitResult InitMonocular(std::span<const Vec3> bearings0, std::span<const Vec3> bearings1,
                         const CameraModel& camera, const InitOptions& options, Rng& rng);

struct RelocOptions {
  double ratio = 0.8;
  int max_distance = 64;
  int min_inliers = 20;
  RansacOptions ransac;
};

struct RelocResult {
  bool success = false;
  Se3Pose pose_wc;
  // Matched (current keypoint index, keyframe track id) pairs.
  std::vector<std::pair<int, KeypointId>> matches;
};

// Matches described current keypoints against the snapshot's last
// keyframe and estimates the pose with P3P + robust refinement.
RelocResult Relocalize(std::span<const Keypoint> current, const MapSnapshot& map,
                       const CameraModel& camera, const RelocOptions& options, Rng& rng);

}  // namespace vslam
