#pragma once

#include <atomic>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vslam/common/random.hpp"
#include "vslam/frontend/frontend.hpp"
#include "vslam/geometry/epipolar.hpp"
#include "vslam/loopclosing/vocabulary.hpp"
#include "vslam/mapping/map.hpp"
#include "vslam/solver/ba.hpp"

namespace vslam {

// Whole-image features added to a keyframe's own keypoints before indexing.
struct LcFeatures {
  std::vector<Vec2> px;  // raw pixels
  std::vector<BriefDescriptor> descriptors;
};

struct LcFeatureOptions {
  int count = 300;
  int fast_threshold = 20;
  int border = 16;
};

// FAST corners of level 0 with the strongest `count` kept, described by
// BRIEF.
LcFeatures ExtractLcFeatures(const ImagePyramid& pyramid, const LcFeatureOptions& options = {});

// Descriptors indexed for a keyframe: its described keypoints then the
// extra features.
std::vector<BriefDescriptor> LcDescriptors(const Keyframe& kf, const LcFeatures& extra);

struct VerifyOptions {
  double ratio = 0.8;
  RansacOptions ransac{3.0, 0.99, 300, 8};
  int min_matches = 12;       // after the ratio test
  int min_p3p_inliers = 15;   // for the hypothesis to count as reliable
  double projection_radius_px = 5.0;
  int max_descriptor_distance = 50;
  int min_inliers = 30;       // after the refinement
};

enum class VerifyStage { kMatching, kEssential, kP3P, kRefinement, kAccepted };

struct VerifiedLoop {
  VerifyStage stage = VerifyStage::kMatching;
  bool accepted = false;
  Se3Pose pose_wc;  // of K_i, expressed in the frame of K_lc's map
  int num_inliers = 0;
  // Keypoints of K_i matched to landmarks of K_lc's local map.
  std::vector<std::pair<KeypointId, PointId>> point_matches;
};

// Match, essential RANSAC, P3P RANSAC on K_lc's landmarks, local-map
// projection and robust refinement. Reads the map only.
VerifiedLoop VerifyCandidate(const Map& map, KeyframeId kf_i, const LcFeatures& extra_i,
                             KeyframeId kf_lc, const LcFeatures& extra_lc,
                             const VerifyOptions& options, Rng& rng);

struct PoseGraphEdge {
  int a = 0;
  int b = 0;
  Se3Pose z_ab;  // measured T_wa^-1 T_wb
  double weight = 1.0;
};

struct PoseGraph {
  std::vector<KeyframeId> ids;
  std::vector<Se3Pose> poses_wc;
  std::vector<bool> fixed;
  std::vector<PoseGraphEdge> edges;

  int Add(KeyframeId id, const Se3Pose& pose_wc, bool is_fixed);
};

// log(z_ab^-1 T_wa^-1 T_wb) and its derivatives for right increments of
// both poses, with the inverse right Jacobian truncated after the
// second-order term of its series.
struct PoseGraphResidual {
  Vec6 e = Vec6::Zero();
  Mat6 d_a = Mat6::Zero();
  Mat6 d_b = Mat6::Zero();
};
PoseGraphResidual LinearizeEdge(const PoseGraph& graph, const PoseGraphEdge& edge);
double PoseGraphCost(const PoseGraph& graph);

struct PgoOptions {
  int max_iterations = 100;
  double min_update = 1e-8;
  double initial_lambda = 1e-6;
};

struct PgoResult {
  bool converged = false;
  bool diverged = false;
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
};

// Levenberg-Marquardt over the free vertices.
PgoResult OptimizePoseGraph(PoseGraph& graph, const PgoOptions& options = {});

struct CorrectionStats {
  int corrected_keyframes = 0;
  int propagated_keyframes = 0;
  int merged_points = 0;
  int added_observations = 0;
};

// Moves every keyframe of `solved` by its correction C = T_new T_old^-1
// (old = pose when the graph was built), keyframes newer than kf_i by the
// correction of kf_i, and the points they anchor accordingly. The matches
// of the loop are merged into K_lc's landmarks. Records the correction
// of kf_i as a new map epoch.
CorrectionStats ApplyCorrections(Map& map, const std::map<KeyframeId, Se3Pose>& old_wc,
                                 const std::map<KeyframeId, Se3Pose>& new_wc, KeyframeId kf_i,
                                 const std::vector<std::pair<KeypointId, PointId>>& point_matches);

// BA over the points seen by the corrected keyframes and every keyframe
// seeing them; keyframes outside `corrected` stay fixed.
BaProblem BuildLooseBa(const Map& map, const std::set<KeyframeId>& corrected,
                       const std::optional<StereoRig>& rig);

struct LooseBaStats {
  bool applied = false;
  int propagated_keyframes = 0;
  int removed_observations = 0;
};

// Commits a solved loose BA and carries the change of the newest solved
// keyframe over to keyframes created during the solve.
LooseBaStats CommitLooseBa(Map& map, const BaProblem& problem, const BaResult& result);

struct LoopCloserOptions {
  LoopDetectorOptions detector;
  LcFeatureOptions features;
  VerifyOptions verify;
  PgoOptions pgo;
  BaOptions loose_ba{20};
  bool run_loose_ba = true;
  std::uint64_t seed = 1;
};

struct LoopEvent {
  KeyframeId kf_i = kInvalidId;
  KeyframeId kf_lc = kInvalidId;
  int inliers = 0;
  double pre_gap = 0.0;   // |t_i - t_i,verified| before the correction
  double post_gap = 0.0;  // same after corrections and loose BA
  std::string ToLine() const;  // "LOOP kf_i kf_lc inliers pre_gap post_gap"
};

// Loop-closing thread body for one keyframe. Locks the map itself: shared
// while reading, exclusive only to commit.
class LoopCloser {
 public:
  LoopCloser(const LoopCloserOptions& options, const std::optional<StereoRig>& rig);

  std::optional<LoopEvent> Process(Map& map, KeyframeId kf);
  const LoopDetector& detector() const { return detector_; }
  int num_closures() const { return num_closures_; }

 private:
  LoopCloserOptions options_;
  std::optional<StereoRig> rig_;
  LoopDetector detector_;
  Rng rng_;
  std::map<KeyframeId, LcFeatures> features_;
  int num_closures_ = 0;
};

}  // namespace vslam
