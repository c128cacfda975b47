#pragma once

#include <cmath>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vslam/common/types.hpp"
#include "vslam/geometry/camera.hpp"
#include "vslam/geometry/se3.hpp"
#include "vslam/mapping/map.hpp"

namespace vslam {

inline const double kChi2Mono95 = kChi2Inv95TwoDof;
inline const double kHuberDelta = std::sqrt(kChi2Mono95);

// Huber cost on a residual norm r: r^2 inside delta, 2 delta |r| - delta^2
// beyond.
inline double HuberLoss(double r_norm, double delta = kHuberDelta) {
  return r_norm <= delta ? r_norm * r_norm : 2.0 * delta * r_norm - delta * delta;
}
inline double HuberWeight(double r_norm, double delta = kHuberDelta) {
  return r_norm <= delta ? 1.0 : delta / r_norm;
}

struct BaPose {
  KeyframeId id = kInvalidId;
  Se3Pose pose_wc;
  bool fixed = false;
};

// Landmark with one degree of freedom: its inverse depth along the anchor
// bearing.
struct BaPoint {
  PointId id = kInvalidId;
  int anchor = -1;  // index into poses
  Vec3 bearing = Vec3::UnitZ();
  double inv_depth = 1.0;
  bool fixed = false;
};

struct BaObservation {
  int pose = -1;
  int point = -1;
  Vec2 px = Vec2::Zero();
  bool has_right = false;
  Vec2 right_px = Vec2::Zero();
};

struct BaProblem {
  CameraModel camera;
  std::optional<StereoRig> rig;  // right-view terms when set
  std::vector<BaPose> poses;
  std::vector<BaPoint> points;
  std::vector<BaObservation> observations;
  std::int64_t epoch = 0;  // map epoch the problem was built in

  int NumFreePoses() const;
  int NumFreePoints() const;
};

// One linearized 2D residual r = x - pi(p) and its derivatives with respect
// to the observing pose, the anchor pose (right increments) and the inverse
// depth. Invalid when the point lies behind the camera.
struct BaResidual {
  bool valid = false;
  Vec2 r = Vec2::Zero();
  Mat26 d_pose = Mat26::Zero();
  Mat26 d_anchor = Mat26::Zero();
  Vec2 d_inv_depth = Vec2::Zero();
};

BaResidual LinearizeObservation(const BaProblem& problem, const BaObservation& obs, bool right);

// Robust cost of the whole problem (each invalid residual costs as much as
// a 100 px one).
double BaCost(const BaProblem& problem);

// Damped Gauss-Newton step for the free parameters, in problem order.
struct BaStep {
  std::vector<Vec6> poses;
  std::vector<double> inv_depths;
};
BaStep ComputeBaStep(const BaProblem& problem, double lambda, bool dense = false);
// Largest diagonal entry of the undamped normal equations.
double MaxHessianDiagonal(const BaProblem& problem);
void ApplyBaStep(BaProblem& problem, const BaStep& step);

struct BaOptions {
  int max_iterations = 20;
  double initial_lambda_scale = 1e-4;
  double chi2_threshold = kChi2Mono95;
  double min_relative_decrease = 1e-12;
  double min_step = 1e-12;
};

struct BaResult {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool diverged = false;
  bool committed = false;  // states kept (final cost <= initial cost)
  // Observations (indices) whose residual exceeds the chi-square bound.
  std::vector<int> outliers;
};

// Levenberg-Marquardt on the problem in place. The problem keeps the best
// states reached, or the initial ones when nothing improved.
BaResult SolveBa(BaProblem& problem, const BaOptions& options = {});

struct LocalBaOptions {
  int min_shared_observations = 25;
  bool monocular = false;  // pins one inverse depth for the scale gauge
};

// Problem with the given free keyframes: their points seen by at least two
// keyframes, every other observer of those points fixed. Without fixed
// observers the oldest free keyframe holds the gauge.
BaProblem BuildBaProblem(const Map& map, const std::set<KeyframeId>& free,
                         const std::optional<StereoRig>& rig, bool pin_scale);

// Local window around kf: kf and its covisible keyframes with enough shared
// observations are free, the other observers of their points are fixed.
// Only points seen by at least two keyframes take part.
BaProblem BuildLocalBa(const Map& map, KeyframeId kf, const std::optional<StereoRig>& rig,
                       const LocalBaOptions& options = {});

struct BaCommitStats {
  bool applied = false;
  int removed_observations = 0;
  int skipped = 0;  // keyframes or points deleted meanwhile
};

// Writes the solved states back into the map and removes the outlier
// observations. Skipped entirely when a loop correction happened since the
// problem was built.
BaCommitStats CommitBa(Map& map, const BaProblem& problem, const BaResult& result);

struct KeyframeFilterOptions {
  double redundant_ratio = 0.95;
  int min_other_observers = 4;
};

// Removes keyframes of kf's covisibility neighbourhood whose 3D points are
// nearly all seen by enough other keyframes. kf itself, the first keyframe
// of the map and locked keyframes are kept.
std::vector<KeyframeId> FilterKeyframes(Map& map, KeyframeId kf,
                                        const KeyframeFilterOptions& options = {});

// Plain-text dump of a problem, for offline regression.
void WriteBaProblem(std::ostream& out, const BaProblem& problem);
BaProblem ReadBaProblem(std::istream& in);

}  // namespace vslam
