#include "vslam/mapping/map.hpp"

#include <algorithm>

namespace vslam {

void CovisibilityGraph::Increment(KeyframeId a, KeyframeId b, int delta) {
  if (a == b) return;
  for (auto [x, y] : {std::pair{a, b}, std::pair{b, a}}) {
    auto& row = counts_[x];
    const int v = (row[y] += delta);
    if (v <= 0) row.erase(y);
    if (row.empty()) counts_.erase(x);
  }
}

int CovisibilityGraph::Count(KeyframeId a, KeyframeId b) const {
  auto it = counts_.find(a);
  if (it == counts_.end()) return 0;
  auto jt = it->second.find(b);
  return jt == it->second.end() ? 0 : jt->second;
}

const std::map<KeyframeId, int>& CovisibilityGraph::Neighbours(KeyframeId a) const {
  static const std::map<KeyframeId, int> kEmpty;
  auto it = counts_.find(a);
  return it == counts_.end() ? kEmpty : it->second;
}

void CovisibilityGraph::RemoveKeyframe(KeyframeId a) {
  auto it = counts_.find(a);
  if (it == counts_.end()) return;
  for (const auto& [b, c] : it->second) {
    auto jt = counts_.find(b);
    if (jt == counts_.end()) continue;
    jt->second.erase(a);
    if (jt->second.empty()) counts_.erase(jt);
  }
  counts_.erase(a);
}

Keyframe& Map::AddKeyframe(Keyframe kf) {
  for (Keypoint& kp : kf.keypoints) {
    kp.is_3d = false;
    kp.map_point_id = kInvalidId;
    track_kfs_[kp.id].push_back(kf.id);
  }
  anchored_[kf.id];
  auto [it, inserted] = keyframes_.insert_or_assign(kf.id, std::move(kf));
  return it->second;
}

void Map::RemoveKeyframe(KeyframeId id) {
  auto it = keyframes_.find(id);
  if (it == keyframes_.end()) return;
  std::vector<PointId> observed;
  for (const Keypoint& kp : it->second.keypoints) {
    if (kp.map_point_id != kInvalidId) observed.push_back(kp.map_point_id);
  }
  for (PointId p : observed) RemoveObservation(p, id);

  // Parent: the closest older keyframe, else the closest newer one.
  auto parent = keyframes_.end();
  if (it != keyframes_.begin()) {
    parent = std::prev(it);
  } else if (std::next(it) != keyframes_.end()) {
    parent = std::next(it);
  }
  if (parent != keyframes_.end()) {
    removed_parent_[id] = {parent->first, parent->second.pose_cw() * it->second.pose_wc};
  }
  for (const Keypoint& kp : it->second.keypoints) {
    auto tk = track_kfs_.find(kp.id);
    if (tk == track_kfs_.end()) continue;
    auto& v = tk->second;
    v.erase(std::remove(v.begin(), v.end(), id), v.end());
    if (v.empty()) track_kfs_.erase(tk);
  }
  covis_.RemoveKeyframe(id);
  anchored_.erase(id);
  keyframes_.erase(it);
}

Keyframe* Map::GetKeyframe(KeyframeId id) {
  auto it = keyframes_.find(id);
  return it == keyframes_.end() ? nullptr : &it->second;
}

const Keyframe* Map::GetKeyframe(KeyframeId id) const {
  auto it = keyframes_.find(id);
  return it == keyframes_.end() ? nullptr : &it->second;
}

void Map::SetKeyframePose(KeyframeId id, const Se3Pose& pose_wc) {
  Keyframe* kf = GetKeyframe(id);
  if (!kf) return;
  kf->pose_wc = pose_wc;
  for (PointId p : anchored_[id]) RecomputePosition(points_.at(p));
}

Vec3 Map::AnchorPosition(const MapPoint& p) const {
  const Keyframe* kf = GetKeyframe(p.anchor_kf);
  const Vec3 local = camera_.Unproject(p.anchor_px) / p.inv_depth;
  return kf ? kf->pose_wc * local : local;
}

void Map::RecomputePosition(MapPoint& p) { p.position = AnchorPosition(p); }

PointId Map::CreatePoint(KeyframeId anchor_kf, KeypointId kp, double inv_depth) {
  Keyframe* kf = GetKeyframe(anchor_kf);
  if (!kf) return kInvalidId;
  const Keypoint* k = kf->Find(kp);
  if (!k || k->map_point_id != kInvalidId || !(inv_depth > 0.0)) return kInvalidId;
  MapPoint p;
  p.id = next_point_id_++;
  p.anchor_kf = anchor_kf;
  p.anchor_px = k->undist_px;
  p.inv_depth = inv_depth;
  const PointId id = p.id;
  auto& stored = points_.emplace(id, std::move(p)).first->second;
  RecomputePosition(stored);
  anchored_[anchor_kf].insert(id);
  AddObservation(id, anchor_kf, kp);
  return id;
}

MapPoint* Map::GetPoint(PointId id) {
  auto it = points_.find(id);
  return it == points_.end() ? nullptr : &it->second;
}

const MapPoint* Map::GetPoint(PointId id) const {
  auto it = points_.find(id);
  return it == points_.end() ? nullptr : &it->second;
}

bool Map::AddObservation(PointId point, KeyframeId kf_id, KeypointId kp_id) {
  MapPoint* p = GetPoint(point);
  Keyframe* kf = GetKeyframe(kf_id);
  if (!p || !kf || p->observers.count(kf_id)) return false;
  Keypoint* kp = kf->Find(kp_id);
  if (!kp || kp->map_point_id != kInvalidId) return false;
  for (const auto& [other, unused] : p->observers) covis_.Increment(kf_id, other, 1);
  p->observers[kf_id] = kp_id;
  kp->is_3d = true;
  kp->map_point_id = point;
  track_to_point_[kp_id] = point;
  if (kp->has_desc) {
    p->descriptors.push_back(kp->desc);
    if (static_cast<int>(p->descriptors.size()) > kMaxPointDescriptors) {
      p->descriptors.erase(p->descriptors.begin());
    }
  }
  return true;
}

void Map::RemoveObservation(PointId point, KeyframeId kf_id) {
  MapPoint* p = GetPoint(point);
  if (!p) return;
  auto obs = p->observers.find(kf_id);
  if (obs == p->observers.end()) return;
  if (p->anchor_kf == kf_id) {
    KeyframeId next = kInvalidId;
    for (const auto& [other, unused] : p->observers) {
      if (other != kf_id) {
        next = other;
        break;
      }
    }
    if (next == kInvalidId) {
      RemovePoint(point);
      return;
    }
    Reanchor(point, next);
    p = GetPoint(point);
    if (!p) return;
    obs = p->observers.find(kf_id);
  }
  const KeypointId kp_id = obs->second;
  p->observers.erase(obs);
  for (const auto& [other, unused] : p->observers) covis_.Increment(kf_id, other, -1);
  if (Keyframe* kf = GetKeyframe(kf_id)) {
    if (Keypoint* kp = kf->Find(kp_id)) {
      kp->is_3d = false;
      kp->map_point_id = kInvalidId;
    }
  }
  bool track_still_used = false;
  for (const auto& [other, kp] : p->observers) track_still_used |= kp == kp_id;
  auto tp = track_to_point_.find(kp_id);
  if (!track_still_used && tp != track_to_point_.end() && tp->second == point) {
    track_to_point_.erase(tp);
  }
}

void Map::RemovePoint(PointId id) {
  auto it = points_.find(id);
  if (it == points_.end()) return;
  const MapPoint& p = it->second;
  for (auto a = p.observers.begin(); a != p.observers.end(); ++a) {
    for (auto b = std::next(a); b != p.observers.end(); ++b) covis_.Increment(a->first, b->first, -1);
    if (Keyframe* kf = GetKeyframe(a->first)) {
      if (Keypoint* kp = kf->Find(a->second)) {
        kp->is_3d = false;
        kp->map_point_id = kInvalidId;
      }
    }
    auto tp = track_to_point_.find(a->second);
    if (tp != track_to_point_.end() && tp->second == id) track_to_point_.erase(tp);
  }
  auto an = anchored_.find(p.anchor_kf);
  if (an != anchored_.end()) an->second.erase(id);
  points_.erase(it);
}

void Map::MergePoints(PointId keep, PointId drop) {
  if (keep == drop) return;
  MapPoint* d = GetPoint(drop);
  if (!d || !GetPoint(keep)) return;
  const std::map<KeyframeId, KeypointId> obs = d->observers;
  const std::vector<BriefDescriptor> descs = d->descriptors;
  RemovePoint(drop);
  for (const auto& [kf, kp] : obs) AddObservation(keep, kf, kp);
  MapPoint* k = GetPoint(keep);
  for (const auto& desc : descs) {
    if (std::find(k->descriptors.begin(), k->descriptors.end(), desc) == k->descriptors.end()) {
      k->descriptors.push_back(desc);
    }
  }
  while (static_cast<int>(k->descriptors.size()) > kMaxPointDescriptors) {
    k->descriptors.erase(k->descriptors.begin());
  }
}

void Map::Reanchor(PointId point, KeyframeId new_anchor) {
  MapPoint* p = GetPoint(point);
  const Keyframe* kf = GetKeyframe(new_anchor);
  if (!p || !kf || p->anchor_kf == new_anchor) return;
  const Vec3 pc = kf->pose_cw() * p->position;
  if (pc.z() <= kMinDepth) {
    RemovePoint(point);
    return;
  }
  const Vec3 kept = p->position;
  anchored_[p->anchor_kf].erase(point);
  p->anchor_kf = new_anchor;
  p->anchor_px = *camera_.ProjectUndistorted(pc);
  p->inv_depth = 1.0 / pc.z();
  anchored_[new_anchor].insert(point);
  // The anchor formula reproduces the position up to rounding; keep the
  // exact value.
  p->position = kept;
}

void Map::SetInverseDepth(PointId point, double inv_depth) {
  MapPoint* p = GetPoint(point);
  if (!p) return;
  p->inv_depth = inv_depth;
  RecomputePosition(*p);
}

std::set<PointId> Map::PointsAnchoredIn(KeyframeId kf) const {
  auto it = anchored_.find(kf);
  return it == anchored_.end() ? std::set<PointId>{} : it->second;
}

CovisibilityGraph Map::BruteForceCovisibility() const {
  CovisibilityGraph g;
  for (const auto& [id, p] : points_) {
    for (auto a = p.observers.begin(); a != p.observers.end(); ++a)
      for (auto b = std::next(a); b != p.observers.end(); ++b) g.Increment(a->first, b->first, 1);
  }
  return g;
}

const std::vector<KeyframeId>* Map::TrackKeyframes(KeypointId kp) const {
  auto it = track_kfs_.find(kp);
  return it == track_kfs_.end() ? nullptr : &it->second;
}

std::optional<PointId> Map::PointOfTrack(KeypointId kp) const {
  auto it = track_to_point_.find(kp);
  if (it == track_to_point_.end()) return std::nullopt;
  return it->second;
}

std::optional<Se3Pose> Map::ResolvePose(KeyframeId id) const {
  if (const Keyframe* kf = GetKeyframe(id)) return kf->pose_wc;
  auto it = removed_parent_.find(id);
  if (it == removed_parent_.end()) return std::nullopt;
  auto parent = ResolvePose(it->second.first);
  if (!parent) return std::nullopt;
  return *parent * it->second.second;
}

void Map::Unlock(KeyframeId id) {
  auto it = locked_.find(id);
  if (it != locked_.end() && --it->second <= 0) locked_.erase(it);
}

std::shared_ptr<MapSnapshot> Map::MakeSnapshot(int recent_keyframes) const {
  auto s = std::make_shared<MapSnapshot>();
  s->version = ++snapshot_version_;
  s->corrections = corrections_;
  s->num_keyframes = keyframes_.size();
  s->num_points = points_.size();
  int taken = 0;
  for (auto it = keyframes_.rbegin(); it != keyframes_.rend() && taken < recent_keyframes; ++it, ++taken) {
    for (const Keypoint& kp : it->second.keypoints) {
      if (kp.map_point_id == kInvalidId || s->tracks.count(kp.id)) continue;
      const MapPoint* p = GetPoint(kp.map_point_id);
      if (p) s->tracks[kp.id] = {p->id, p->position};
    }
  }
  // Tracks associated through later re-tracking or merges.
  for (auto& [kp, entry] : s->tracks) {
    auto tp = track_to_point_.find(kp);
    if (tp != track_to_point_.end() && tp->second != entry.id) {
      if (const MapPoint* p = GetPoint(tp->second)) entry = {p->id, p->position};
    }
  }
  if (!keyframes_.empty()) {
    const Keyframe& last = keyframes_.rbegin()->second;
    s->last_kf = last.id;
    s->last_kf_pose = last.pose_wc;
    s->last_kf_keypoints = last.keypoints;
  }
  return s;
}

}  // namespace vslam
