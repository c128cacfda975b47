#pragma once

#include <functional>
#include <memory>
#include <optional>

#include "vslam/frontend/frontend.hpp"
#include "vslam/imgproc/clahe.hpp"
#include "vslam/imgproc/features.hpp"

namespace vslam {

struct TrackerOptions {
  bool monocular = false;
  bool clahe = true;
  ClaheOptions clahe_options;
  int pyramid_levels = kDefaultPyramidLevels;
  GridOptions grid;
  TrackOptions track;
  RansacOptions epipolar{3.0, 0.99, 200, 5};
  PoseOptions pose;
  RansacOptions p3p{3.0, 0.99, 100, 4};
  // Below this stage-1 success ratio the predicted pose is replaced by P3P.
  double p3p_trigger_ratio = 0.5;
  KeyframeOptions keyframe;
  InitOptions init;
  RelocOptions reloc;
  int lost_frames_before_reloc = 3;
  // Stereo only: after this many lost frames a new keyframe is seeded at
  // the last known pose, leaving a gap in the trajectory.
  int lost_frames_before_reset = 30;
  std::uint64_t seed = 1;
};

enum class TrackState { kInitializing, kTracking, kLost };

struct TrackedFrame {
  std::int64_t index = 0;
  double timestamp = 0.0;
  bool ok = false;
  Se3Pose pose_wc;
  // Reference keyframe and the frame pose relative to it, for re-expressing
  // the trajectory after the keyframes were optimized.
  KeyframeId ref_kf = kInvalidId;
  Se3Pose t_kf_frame;
  bool keyframe = false;
  bool gap = false;  // first frame after a reset
  int num_3d = 0;
  int num_inliers = 0;
  double stage1_ratio = 1.0;
  bool used_p3p = false;
  bool relocalized = false;
};

// Per-frame front-end: contrast enhancement, pyramid, two-stage tracking,
// epipolar filter, robust pose with P3P fallback, keyframe decision and
// creation. Reads the map only through published snapshots; keyframes
// leave through the sink.
class Tracker {
 public:
  using KeyframeSink = std::function<void(Keyframe)>;

  Tracker(const TrackerOptions& options, const CameraModel& camera,
          const std::optional<StereoRig>& rig, const SnapshotBox* snapshots, KeyframeSink sink);

  TrackedFrame Process(std::int64_t index, double timestamp, const GrayImage& left,
                       const GrayImage* right);

  TrackState state() const { return state_; }
  KeyframeId num_keyframes() const { return next_kf_id_; }
  std::int64_t epoch() const { return epoch_; }

 private:
  GrayImage Enhance(const GrayImage& image) const;
  void ApplyCorrections(const MapSnapshot& snapshot);
  void Mark3d(std::vector<Keypoint>& kps, const MapSnapshot& snapshot) const;
  Keyframe MakeKeyframe(const Se3Pose& pose_wc, const GrayImage* right);
  void DetectNew(std::vector<Keypoint>& kps, const ImagePyramid& pyramid);
  void Describe(std::vector<Keypoint>& kps, const ImagePyramid& pyramid) const;
  void EmitKeyframe(const GrayImage* right, TrackedFrame& out);
  bool InitializeMonocular(TrackedFrame& out, Rng& rng);
  bool TryRelocalize(const MapSnapshot& snapshot, TrackedFrame& out, Rng& rng);

  TrackerOptions options_;
  CameraModel camera_;
  std::optional<StereoRig> rig_;
  const SnapshotBox* snapshots_;
  KeyframeSink sink_;

  TrackState state_ = TrackState::kInitializing;
  MotionModel motion_;
  Frame prev_;
  Frame cur_;
  bool has_prev_ = false;
  std::int64_t epoch_ = 0;
  KeyframeId next_kf_id_ = 0;
  KeypointId next_track_id_ = 0;
  int lost_frames_ = 0;
  bool pending_gap_ = false;

  // Last keyframe as created by this tracker.
  KeyframeId last_kf_id_ = kInvalidId;
  Se3Pose last_kf_pose_;
  std::vector<Keypoint> last_kf_keypoints_;
  // Monocular initialization reference.
  std::optional<Keyframe> init_kf_;
};

}  // namespace vslam
