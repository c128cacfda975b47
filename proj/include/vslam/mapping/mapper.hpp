#pragma once

#include <atomic>
#include <optional>

#include "vslam/mapping/keyframe_ops.hpp"

namespace vslam {

struct MapperOptions {
  StereoMatchOptions stereo;
  TriangulationOptions triangulation;
  LocalMapOptions local_map;
};

struct MappingStats {
  KeyframeId kf = kInvalidId;
  int associated = 0;
  StereoMatchStats stereo;
  TriangulationStats triangulation;
  LocalMapStats local_map;
};

// Keyframe processing with the map held exclusively by the caller:
// insertion (pose moved into the current map epoch), track association,
// stereo matching, triangulation, then local-map re-tracking, which is
// skipped once `abort` is raised.
MappingStats ProcessKeyframe(Map& map, Keyframe kf, const std::optional<StereoRig>& rig,
                             const MapperOptions& options = {},
                             const std::atomic<bool>* abort = nullptr);

}  // namespace vslam
