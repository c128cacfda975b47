#include "vslam/frontend/tracker.hpp"

#include <algorithm>
#include <set>

#include "vslam/common/log.hpp"

namespace vslam {

Tracker::Tracker(const TrackerOptions& options, const CameraModel& camera,
                 const std::optional<StereoRig>& rig, const SnapshotBox* snapshots, KeyframeSink sink)
    : options_(options), camera_(camera), rig_(rig), snapshots_(snapshots), sink_(std::move(sink)) {
  if (options_.monocular) rig_.reset();
}

GrayImage Tracker::Enhance(const GrayImage& image) const {
  return options_.clahe ? Clahe(image, options_.clahe_options) : image;
}

void Tracker::ApplyCorrections(const MapSnapshot& snapshot) {
  while (epoch_ < snapshot.epoch()) {
    const Se3Pose& c = snapshot.corrections[epoch_];
    motion_.ApplyCorrection(c);
    prev_.pose_wc = c * prev_.pose_wc;
    last_kf_pose_ = c * last_kf_pose_;
    ++epoch_;
  }
}

void Tracker::Mark3d(std::vector<Keypoint>& kps, const MapSnapshot& snapshot) const {
  for (Keypoint& kp : kps) {
    const auto* tp = snapshot.Find(kp.id);
    kp.is_3d = tp != nullptr;
    kp.map_point_id = tp ? tp->id : kInvalidId;
  }
}

void Tracker::DetectNew(std::vector<Keypoint>& kps, const ImagePyramid& pyramid) {
  std::vector<Vec2> occupied;
  occupied.reserve(kps.size());
  for (const Keypoint& kp : kps) occupied.push_back(kp.raw_px);
  for (const Corner& c : DetectGrid(pyramid.level(0), options_.grid, occupied)) {
    Keypoint kp;
    kp.id = next_track_id_++;
    kp.SetRaw(camera_, c.px);
    kps.push_back(kp);
  }
}

void Tracker::Describe(std::vector<Keypoint>& kps, const ImagePyramid& pyramid) const {
  for (Keypoint& kp : kps) {
    kp.desc = ComputeBrief(pyramid, kp.raw_px);
    kp.has_desc = true;
  }
}

void Tracker::EmitKeyframe(const GrayImage* right, TrackedFrame& out) {
  DetectNew(cur_.keypoints, *cur_.pyramid);
  Describe(cur_.keypoints, *cur_.pyramid);
  Keyframe kf;
  kf.id = next_kf_id_++;
  kf.frame_index = cur_.index;
  kf.timestamp = cur_.timestamp;
  kf.pose_wc = cur_.pose_wc;
  kf.keypoints = cur_.keypoints;
  kf.pyramid = cur_.pyramid;
  if (rig_ && right) {
    kf.right_pyramid = std::make_shared<ImagePyramid>(BuildPyramid(Enhance(*right), options_.pyramid_levels));
  }
  kf.epoch = epoch_;
  last_kf_id_ = kf.id;
  last_kf_pose_ = kf.pose_wc;
  last_kf_keypoints_ = kf.keypoints;
  out.keyframe = true;
  sink_(std::move(kf));
}

bool Tracker::InitializeMonocular(TrackedFrame& out, Rng& rng) {
  const Keyframe& ref = *init_kf_;
  std::vector<Vec3> b0, b1;
  std::vector<KeypointId> ids;
  for (const Keypoint& kp : cur_.keypoints) {
    if (const Keypoint* r = ref.Find(kp.id)) {
      b0.push_back(r->bearing);
      b1.push_back(kp.bearing);
      ids.push_back(kp.id);
    }
  }
  if (static_cast<int>(ids.size()) < options_.init.min_matches) {
    // Too few tracks survive: restart from the current frame.
    init_kf_.reset();
    return false;
  }
  const InitResult r = InitMonocular(b0, b1, camera_, options_.init, rng);
  if (r.status != InitStatus::kOk) return false;
  std::set<KeypointId> rejected;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!r.inliers[i]) rejected.insert(ids[i]);
  }
  std::erase_if(cur_.keypoints, [&](const Keypoint& k) { return rejected.count(k.id) > 0; });

  Keyframe kf0 = std::move(*init_kf_);
  init_kf_.reset();
  kf0.id = next_kf_id_++;
  kf0.pose_wc = Se3Pose();
  kf0.epoch = epoch_;
  motion_.Reset();
  motion_.Update(kf0.pose_wc, kf0.timestamp);
  sink_(std::move(kf0));
  cur_.pose_wc = r.t_10.inverse();
  EmitKeyframe(nullptr, out);
  LogInfo("monocular initialization at frame " + std::to_string(cur_.index) + " with " +
          std::to_string(r.num_triangulated) + " points");
  return true;
}

bool Tracker::TryRelocalize(const MapSnapshot& snapshot, TrackedFrame& out, Rng& rng) {
  std::vector<Keypoint> kps = cur_.keypoints;
  DetectNew(kps, *cur_.pyramid);
  Describe(kps, *cur_.pyramid);
  const RelocResult r = Relocalize(kps, snapshot, camera_, options_.reloc, rng);
  if (!r.success) return false;
  std::set<KeypointId> tracks;
  std::set<int> matched;
  for (const auto& [i, track] : r.matches) {
    tracks.insert(track);
    matched.insert(i);
  }
  for (const auto& [i, track] : r.matches) kps[i].id = track;
  std::vector<Keypoint> kept;
  for (std::size_t i = 0; i < kps.size(); ++i) {
    if (matched.count(static_cast<int>(i)) || !tracks.count(kps[i].id)) kept.push_back(kps[i]);
  }
  std::sort(kept.begin(), kept.end(), [](const Keypoint& a, const Keypoint& b) { return a.id < b.id; });
  cur_.keypoints = std::move(kept);
  cur_.pose_wc = r.pose_wc;
  out.relocalized = true;
  return true;
}

TrackedFrame Tracker::Process(std::int64_t index, double timestamp, const GrayImage& left,
                              const GrayImage* right) {
  TrackedFrame out;
  out.index = index;
  out.timestamp = timestamp;
  cur_ = Frame();
  cur_.index = index;
  cur_.timestamp = timestamp;
  cur_.pyramid = std::make_shared<ImagePyramid>(BuildPyramid(Enhance(left), options_.pyramid_levels));
  const std::shared_ptr<const MapSnapshot> snapshot = snapshots_->Get();
  ApplyCorrections(*snapshot);
  Rng rng(options_.seed, StreamId(0x747261636b, static_cast<std::uint64_t>(index)));

  auto finish = [&](bool ok) {
    out.ok = ok;
    out.pose_wc = cur_.pose_wc;
    out.ref_kf = last_kf_id_;
    out.t_kf_frame = last_kf_pose_.inverse() * cur_.pose_wc;
    if (ok && pending_gap_) {
      out.gap = true;
      pending_gap_ = false;
    }
    prev_ = std::move(cur_);
    has_prev_ = true;
    return out;
  };

  if (state_ == TrackState::kInitializing) {
    if (!options_.monocular) {
      DetectNew(cur_.keypoints, *cur_.pyramid);
      if (cur_.keypoints.size() < 10) {
        cur_.keypoints.clear();
        return finish(false);
      }
      cur_.pose_wc = has_prev_ ? prev_.pose_wc : Se3Pose();
      EmitKeyframe(right, out);
      motion_.Reset();
      motion_.Update(cur_.pose_wc, timestamp);
      state_ = TrackState::kTracking;
      return finish(true);
    }
    if (!init_kf_ || !has_prev_) {
      DetectNew(cur_.keypoints, *cur_.pyramid);
      Describe(cur_.keypoints, *cur_.pyramid);
      Keyframe ref;
      ref.frame_index = index;
      ref.timestamp = timestamp;
      ref.keypoints = cur_.keypoints;
      ref.pyramid = cur_.pyramid;
      init_kf_ = std::move(ref);
      return finish(false);
    }
    const TrackResult tr = TrackFrame(prev_, *cur_.pyramid, prev_.pose_wc, MapSnapshot(), camera_, options_.track);
    cur_.keypoints = tr.keypoints;
    if (!InitializeMonocular(out, rng)) {
      if (!init_kf_) {
        // Re-anchor the initialization on this frame.
        cur_.keypoints.clear();
        DetectNew(cur_.keypoints, *cur_.pyramid);
        Describe(cur_.keypoints, *cur_.pyramid);
        Keyframe ref;
        ref.frame_index = index;
        ref.timestamp = timestamp;
        ref.keypoints = cur_.keypoints;
        ref.pyramid = cur_.pyramid;
        init_kf_ = std::move(ref);
      }
      return finish(false);
    }
    motion_.Update(cur_.pose_wc, timestamp);
    state_ = TrackState::kTracking;
    return finish(true);
  }

  const Se3Pose predicted = motion_.valid() ? motion_.Predict(timestamp) : prev_.pose_wc;
  Mark3d(prev_.keypoints, *snapshot);
  const TrackResult tr = TrackFrame(prev_, *cur_.pyramid, predicted, *snapshot, camera_, options_.track);
  out.stage1_ratio = tr.stage1_ratio;
  cur_.keypoints = tr.keypoints;
  Mark3d(cur_.keypoints, *snapshot);

  const EpipolarFilterResult ef = FilterEpipolar(prev_.keypoints, cur_.keypoints, camera_, options_.epipolar, rng);
  {
    std::vector<Keypoint> kept;
    for (std::size_t i = 0; i < cur_.keypoints.size(); ++i) {
      if (ef.keep[i]) kept.push_back(cur_.keypoints[i]);
    }
    cur_.keypoints = std::move(kept);
  }

  std::vector<PoseObservation> obs;
  std::vector<std::size_t> obs_kp;
  for (std::size_t i = 0; i < cur_.keypoints.size(); ++i) {
    if (const auto* tp = snapshot->Find(cur_.keypoints[i].id)) {
      obs.push_back({cur_.keypoints[i].undist_px, tp->position});
      obs_kp.push_back(i);
    }
  }
  out.num_3d = static_cast<int>(obs.size());
  Se3Pose initial = predicted;
  if (tr.stage1_attempts >= 10 && tr.stage1_ratio < options_.p3p_trigger_ratio) {
    if (const auto guess = P3PFallback(obs, camera_, options_.p3p, rng)) {
      initial = *guess;
      out.used_p3p = true;
    }
  }
  PoseResult pose;
  if (obs.size() >= 4) pose = EstimatePose(obs, camera_, initial, options_.pose);
  bool ok = pose.status == PoseStatus::kOk;
  LogDebug("frame " + std::to_string(index) + " tracked " + std::to_string(tr.keypoints.size()) + "/" +
           std::to_string(prev_.keypoints.size()) + " epipolar " + std::to_string(cur_.keypoints.size()) +
           " 3d " + std::to_string(obs.size()) + " inliers " + std::to_string(pose.num_inliers));
  if (ok) {
    std::vector<bool> drop(cur_.keypoints.size(), false);
    for (std::size_t k = 0; k < obs.size(); ++k) {
      if (!pose.inliers[k]) drop[obs_kp[k]] = true;
    }
    std::vector<Keypoint> kept;
    for (std::size_t i = 0; i < cur_.keypoints.size(); ++i) {
      if (!drop[i]) kept.push_back(cur_.keypoints[i]);
    }
    cur_.keypoints = std::move(kept);
    cur_.pose_wc = pose.pose_wc;
    out.num_inliers = pose.num_inliers;
    lost_frames_ = 0;
    state_ = TrackState::kTracking;
  } else if (lost_frames_ == 0 && snapshot->last_kf < last_kf_id_ && obs.size() < 4) {
    // The mapper has not published the last keyframe yet: coast.
    cur_.pose_wc = predicted;
    return finish(false);
  } else {
    ++lost_frames_;
    state_ = TrackState::kLost;
    motion_.Reset();
    cur_.pose_wc = predicted;
    if (lost_frames_ >= options_.lost_frames_before_reloc && TryRelocalize(*snapshot, out, rng)) {
      lost_frames_ = 0;
      state_ = TrackState::kTracking;
      motion_.Update(cur_.pose_wc, timestamp);
      EmitKeyframe(right, out);
      return finish(true);
    }
    if (rig_ && lost_frames_ >= options_.lost_frames_before_reset) {
      LogWarning("tracking lost at frame " + std::to_string(index) + ": new keyframe seeded");
      cur_.keypoints.clear();
      DetectNew(cur_.keypoints, *cur_.pyramid);
      EmitKeyframe(right, out);
      lost_frames_ = 0;
      state_ = TrackState::kTracking;
      pending_gap_ = true;
      motion_.Update(cur_.pose_wc, timestamp);
      return finish(true);
    }
    return finish(false);
  }

  std::vector<Keypoint> kf_kps = last_kf_keypoints_;
  Mark3d(kf_kps, *snapshot);
  KeyframeOptions kf_opts = options_.keyframe;
  kf_opts.num_cells = CellGrid(cur_.pyramid->width(), cur_.pyramid->height(), options_.grid.cell_size).Count();
  const Mat3 r_cur_kf = cur_.pose_wc.rotation().transpose() * last_kf_pose_.rotation();
  const KeyframeDecision decision = DecideKeyframe(kf_kps, cur_.keypoints, r_cur_kf, camera_, kf_opts);
  LogDebug("frame " + std::to_string(index) + " kf ratio " + std::to_string(decision.tracked_ratio) + " parallax " + std::to_string(decision.mean_parallax_px) + " live " + std::to_string(decision.live_keypoints) + " cells " + std::to_string(kf_opts.num_cells) + " kf3d_n " + std::to_string(kf_kps.size()));
  if (decision.create) EmitKeyframe(right, out);
  motion_.Update(cur_.pose_wc, timestamp);
  return finish(ok);
}

}  // namespace vslam
