#include "vslam/solver/ba.hpp"

#include <algorithm>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <stdexcept>

#include <Eigen/Dense>

namespace vslam {

int BaProblem::NumFreePoses() const {
  return static_cast<int>(std::count_if(poses.begin(), poses.end(), [](const BaPose& p) { return !p.fixed; }));
}

int BaProblem::NumFreePoints() const {
  return static_cast<int>(std::count_if(points.begin(), points.end(), [](const BaPoint& p) { return !p.fixed; }));
}

BaResidual LinearizeObservation(const BaProblem& problem, const BaObservation& obs, bool right) {
  BaResidual out;
  const BaPose& pj = problem.poses[obs.pose];
  const BaPoint& pt = problem.points[obs.point];
  const BaPose& pa = problem.poses[pt.anchor];
  const Vec3 qa = pt.bearing / pt.inv_depth;
  const Se3Pose cw = pj.pose_wc.inverse();
  const Vec3 pc = cw * (pa.pose_wc * qa);
  const Mat3 r_ja = cw.rotation() * pa.pose_wc.rotation();

  Eigen::Matrix<double, 3, 6> dpc_pose, dpc_anchor;
  dpc_pose << -Mat3::Identity(), Hat(pc);
  dpc_anchor << r_ja, -r_ja * Hat(qa);
  Vec3 dpc_depth = -r_ja * pt.bearing / (pt.inv_depth * pt.inv_depth);

  const CameraModel* cam = &problem.camera;
  Vec3 p = pc;
  Vec2 target = obs.px;
  if (right) {
    const Mat3 r_rl = problem.rig->t_rl.rotation();
    p = problem.rig->t_rl * pc;
    dpc_pose = r_rl * dpc_pose;
    dpc_anchor = r_rl * dpc_anchor;
    dpc_depth = r_rl * dpc_depth;
    cam = &problem.rig->right;
    target = obs.right_px;
  }
  const auto proj = cam->ProjectUndistorted(p);
  if (!proj) return out;
  const Mat23 jp = cam->ProjectionJacobian(p);
  out.valid = true;
  out.r = target - *proj;
  out.d_pose = -jp * dpc_pose;
  out.d_anchor = -jp * dpc_anchor;
  out.d_inv_depth = -jp * dpc_depth;
  if (obs.pose == pt.anchor) {
    out.d_pose += out.d_anchor;
    out.d_anchor.setZero();
  }
  return out;
}

namespace {

constexpr double kInvalidResidualPx = 100.0;

template <typename Fn>
void ForEachResidual(const BaProblem& problem, Fn fn) {
  const bool stereo = problem.rig.has_value();
  for (std::size_t i = 0; i < problem.observations.size(); ++i) {
    const BaObservation& obs = problem.observations[i];
    fn(i, obs, LinearizeObservation(problem, obs, false));
    if (stereo && obs.has_right) fn(i, obs, LinearizeObservation(problem, obs, true));
  }
}

struct NormalEquations {
  std::vector<int> pose_index;   // problem pose -> free block, -1 when fixed
  std::vector<int> point_index;  // problem point -> free slot, -1 when fixed
  int num_poses = 0;
  int num_points = 0;
  Eigen::MatrixXd hpp;
  Eigen::VectorXd bp;
  std::vector<double> hll, bl;
  // Per free point: (free pose block, H_pl column).
  std::vector<std::vector<std::pair<int, Vec6>>> hpl;
};

void AddCoupling(std::vector<std::pair<int, Vec6>>& row, int block, const Vec6& v) {
  for (auto& [b, acc] : row) {
    if (b == block) {
      acc += v;
      return;
    }
  }
  row.emplace_back(block, v);
}

NormalEquations BuildNormalEquations(const BaProblem& problem) {
  NormalEquations ne;
  ne.pose_index.assign(problem.poses.size(), -1);
  ne.point_index.assign(problem.points.size(), -1);
  for (std::size_t i = 0; i < problem.poses.size(); ++i) {
    if (!problem.poses[i].fixed) ne.pose_index[i] = ne.num_poses++;
  }
  for (std::size_t i = 0; i < problem.points.size(); ++i) {
    if (!problem.points[i].fixed) ne.point_index[i] = ne.num_points++;
  }
  ne.hpp = Eigen::MatrixXd::Zero(6 * ne.num_poses, 6 * ne.num_poses);
  ne.bp = Eigen::VectorXd::Zero(6 * ne.num_poses);
  ne.hll.assign(ne.num_points, 0.0);
  ne.bl.assign(ne.num_points, 0.0);
  ne.hpl.resize(ne.num_points);

  ForEachResidual(problem, [&](std::size_t, const BaObservation& obs, const BaResidual& res) {
    if (!res.valid) return;
    const double w = HuberWeight(res.r.norm());
    const int anchor = problem.points[obs.point].anchor;
    std::pair<int, const Mat26*> blocks[2] = {{ne.pose_index[obs.pose], &res.d_pose},
                                              {anchor == obs.pose ? -1 : ne.pose_index[anchor], &res.d_anchor}};
    for (const auto& [a, ja] : blocks) {
      if (a < 0) continue;
      ne.bp.segment<6>(6 * a) -= w * ja->transpose() * res.r;
      for (const auto& [b, jb] : blocks) {
        if (b < 0) continue;
        ne.hpp.block<6, 6>(6 * a, 6 * b) += w * ja->transpose() * *jb;
      }
    }
    const int l = ne.point_index[obs.point];
    if (l < 0) return;
    ne.hll[l] += w * res.d_inv_depth.squaredNorm();
    ne.bl[l] -= w * res.d_inv_depth.dot(res.r);
    for (const auto& [a, ja] : blocks) {
      if (a >= 0) AddCoupling(ne.hpl[l], a, w * ja->transpose() * res.d_inv_depth);
    }
  });
  return ne;
}

}  // namespace

double BaCost(const BaProblem& problem) {
  double cost = 0.0;
  ForEachResidual(problem, [&](std::size_t, const BaObservation&, const BaResidual& res) {
    cost += HuberLoss(res.valid ? res.r.norm() : kInvalidResidualPx);
  });
  return cost;
}

double MaxHessianDiagonal(const BaProblem& problem) {
  const NormalEquations ne = BuildNormalEquations(problem);
  double m = ne.num_poses > 0 ? ne.hpp.diagonal().maxCoeff() : 0.0;
  for (double h : ne.hll) m = std::max(m, h);
  return m;
}

BaStep ComputeBaStep(const BaProblem& problem, double lambda, bool dense) {
  NormalEquations ne = BuildNormalEquations(problem);
  const int np = 6 * ne.num_poses;
  ne.hpp.diagonal().array() += lambda;
  for (double& h : ne.hll) h += lambda;

  Eigen::VectorXd dxp = Eigen::VectorXd::Zero(np);
  std::vector<double> dxl(ne.num_points, 0.0);
  if (dense) {
    const int n = np + ne.num_points;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd b(n);
    h.topLeftCorner(np, np) = ne.hpp;
    b.head(np) = ne.bp;
    for (int l = 0; l < ne.num_points; ++l) {
      h(np + l, np + l) = ne.hll[l];
      b(np + l) = ne.bl[l];
      for (const auto& [a, v] : ne.hpl[l]) {
        h.block<6, 1>(6 * a, np + l) = v;
        h.block<1, 6>(np + l, 6 * a) = v.transpose();
      }
    }
    const Eigen::VectorXd x = h.ldlt().solve(b);
    dxp = x.head(np);
    for (int l = 0; l < ne.num_points; ++l) dxl[l] = x(np + l);
  } else {
    // Schur complement on the diagonal inverse-depth block.
    Eigen::MatrixXd s = ne.hpp;
    Eigen::VectorXd rhs = ne.bp;
    for (int l = 0; l < ne.num_points; ++l) {
      if (ne.hll[l] <= 0.0) continue;
      const double inv = 1.0 / ne.hll[l];
      for (const auto& [a, va] : ne.hpl[l]) {
        rhs.segment<6>(6 * a) -= va * (ne.bl[l] * inv);
        for (const auto& [b, vb] : ne.hpl[l]) s.block<6, 6>(6 * a, 6 * b) -= va * vb.transpose() * inv;
      }
    }
    if (np > 0) dxp = s.ldlt().solve(rhs);
    for (int l = 0; l < ne.num_points; ++l) {
      if (ne.hll[l] <= 0.0) continue;
      double r = ne.bl[l];
      for (const auto& [a, v] : ne.hpl[l]) r -= v.dot(dxp.segment<6>(6 * a));
      dxl[l] = r / ne.hll[l];
    }
  }

  BaStep step;
  for (std::size_t i = 0; i < problem.poses.size(); ++i) {
    if (ne.pose_index[i] >= 0) step.poses.push_back(dxp.segment<6>(6 * ne.pose_index[i]));
  }
  step.inv_depths = std::move(dxl);
  return step;
}

void ApplyBaStep(BaProblem& problem, const BaStep& step) {
  std::size_t k = 0;
  for (BaPose& p : problem.poses) {
    if (!p.fixed) p.pose_wc = p.pose_wc * Se3Pose::Exp(step.poses[k++]);
  }
  k = 0;
  for (BaPoint& p : problem.points) {
    if (!p.fixed) p.inv_depth += step.inv_depths[k++];
  }
}

namespace {

double StepNorm(const BaStep& step) {
  double s = 0.0;
  for (const Vec6& v : step.poses) s += v.squaredNorm();
  for (double d : step.inv_depths) s += d * d;
  return std::sqrt(s);
}

std::vector<int> FindOutliers(const BaProblem& problem, double chi2) {
  std::vector<int> out;
  ForEachResidual(problem, [&](std::size_t i, const BaObservation&, const BaResidual& res) {
    if (!res.valid || res.r.squaredNorm() > chi2) {
      if (out.empty() || out.back() != static_cast<int>(i)) out.push_back(static_cast<int>(i));
    }
  });
  return out;
}

}  // namespace

BaResult SolveBa(BaProblem& problem, const BaOptions& options) {
  BaResult result;
  double cost = BaCost(problem);
  result.initial_cost = cost;
  if (problem.NumFreePoses() + problem.NumFreePoints() > 0) {
    double lambda = options.initial_lambda_scale * std::max(MaxHessianDiagonal(problem), 1e-12);
    const double max_lambda = lambda * 1e12;
    std::vector<BaPose> saved_poses;
    std::vector<BaPoint> saved_points;
    while (result.iterations < options.max_iterations) {
      ++result.iterations;
      const BaStep step = ComputeBaStep(problem, lambda);
      if (StepNorm(step) < options.min_step) break;
      saved_poses = problem.poses;
      saved_points = problem.points;
      ApplyBaStep(problem, step);
      const bool positive = std::all_of(problem.points.begin(), problem.points.end(),
                                        [](const BaPoint& p) { return p.inv_depth > 0.0; });
      const double trial = positive ? BaCost(problem) : std::numeric_limits<double>::infinity();
      if (trial < cost) {
        const double decrease = (cost - trial) / std::max(cost, 1e-300);
        cost = trial;
        lambda /= 3.0;
        if (decrease < options.min_relative_decrease) break;
      } else {
        problem.poses = std::move(saved_poses);
        problem.points = std::move(saved_points);
        lambda *= 10.0;
        if (lambda > max_lambda) {
          result.diverged = true;
          break;
        }
      }
    }
  }
  result.final_cost = cost;
  result.committed = cost <= result.initial_cost;
  result.outliers = FindOutliers(problem, options.chi2_threshold);
  return result;
}

BaProblem BuildBaProblem(const Map& map, const std::set<KeyframeId>& free_in,
                         const std::optional<StereoRig>& rig, bool pin_scale) {
  BaProblem problem;
  problem.camera = map.camera();
  problem.rig = rig;
  problem.epoch = map.epoch();
  std::set<KeyframeId> free;
  for (KeyframeId f : free_in) {
    if (map.HasKeyframe(f)) free.insert(f);
  }
  std::set<PointId> point_ids;
  for (KeyframeId f : free) {
    for (const Keypoint& kp : map.GetKeyframe(f)->keypoints) {
      if (kp.map_point_id == kInvalidId) continue;
      const MapPoint* p = map.GetPoint(kp.map_point_id);
      if (p && p->observers.size() >= 2) point_ids.insert(kp.map_point_id);
    }
  }
  std::set<KeyframeId> fixed;
  for (PointId id : point_ids) {
    for (const auto& [o, kp] : map.GetPoint(id)->observers) {
      if (!free.count(o)) fixed.insert(o);
    }
  }
  if (fixed.empty() && !free.empty()) {
    fixed.insert(*free.begin());
    free.erase(free.begin());
  }

  std::map<KeyframeId, int> pose_index;
  for (const auto* set : {&free, &fixed}) {
    for (KeyframeId id : *set) {
      pose_index[id] = static_cast<int>(problem.poses.size());
      problem.poses.push_back({id, map.GetKeyframe(id)->pose_wc, set == &fixed});
    }
  }
  for (PointId id : point_ids) {
    const MapPoint& p = *map.GetPoint(id);
    const int index = static_cast<int>(problem.points.size());
    problem.points.push_back(
        {id, pose_index.at(p.anchor_kf), map.camera().Unproject(p.anchor_px), p.inv_depth, false});
    for (const auto& [o, kp_id] : p.observers) {
      const Keypoint* kp = map.GetKeyframe(o)->Find(kp_id);
      if (!kp) continue;
      BaObservation obs;
      obs.pose = pose_index.at(o);
      obs.point = index;
      obs.px = kp->undist_px;
      obs.has_right = rig.has_value() && kp->is_stereo;
      obs.right_px = kp->right_undist_px;
      problem.observations.push_back(obs);
    }
  }

  // Scale gauge: with fewer than two fixed poses pin the inverse depth of
  // the most observed point, preferring points anchored in a fixed
  // keyframe.
  if (pin_scale && fixed.size() < 2 && !problem.points.empty()) {
    std::vector<int> observer_count(problem.points.size(), 0);
    for (const BaObservation& o : problem.observations) ++observer_count[o.point];
    int best = -1;
    auto key = [&](int i) {
      return std::make_pair(problem.poses[problem.points[i].anchor].fixed, observer_count[i]);
    };
    for (int i = 0; i < static_cast<int>(problem.points.size()); ++i) {
      if (best < 0 || key(i) > key(best)) best = i;
    }
    problem.points[best].fixed = true;
  }
  return problem;
}

BaProblem BuildLocalBa(const Map& map, KeyframeId kf_id, const std::optional<StereoRig>& rig,
                       const LocalBaOptions& options) {
  if (!map.HasKeyframe(kf_id)) {
    BaProblem empty;
    empty.camera = map.camera();
    empty.rig = rig;
    empty.epoch = map.epoch();
    return empty;
  }
  std::set<KeyframeId> free = {kf_id};
  for (const auto& [n, count] : map.covisibility().Neighbours(kf_id)) {
    if (count >= options.min_shared_observations) free.insert(n);
  }
  return BuildBaProblem(map, free, rig, options.monocular && !map.loop_closed());
}

BaCommitStats CommitBa(Map& map, const BaProblem& problem, const BaResult& result) {
  BaCommitStats stats;
  if (!result.committed || map.epoch() != problem.epoch) return stats;
  stats.applied = true;
  for (const BaPose& p : problem.poses) {
    if (p.fixed) continue;
    if (map.HasKeyframe(p.id)) {
      map.SetKeyframePose(p.id, p.pose_wc);
    } else {
      ++stats.skipped;
    }
  }
  for (const BaPoint& p : problem.points) {
    if (p.fixed) continue;
    const MapPoint* mp = map.GetPoint(p.id);
    if (mp && mp->anchor_kf == problem.poses[p.anchor].id) {
      map.SetInverseDepth(p.id, p.inv_depth);
    } else {
      ++stats.skipped;
    }
  }
  for (int i : result.outliers) {
    const BaObservation& o = problem.observations[i];
    const PointId point = problem.points[o.point].id;
    const KeyframeId kf = problem.poses[o.pose].id;
    const MapPoint* mp = map.GetPoint(point);
    if (!mp || !mp->observers.count(kf)) continue;
    map.RemoveObservation(point, kf);
    ++stats.removed_observations;
  }
  return stats;
}

std::vector<KeyframeId> FilterKeyframes(Map& map, KeyframeId kf,
                                        const KeyframeFilterOptions& options) {
  std::vector<KeyframeId> removed;
  if (map.keyframes().empty()) return removed;
  const KeyframeId first = map.keyframes().begin()->first;
  std::vector<KeyframeId> candidates;
  for (const auto& [n, count] : map.covisibility().Neighbours(kf)) candidates.push_back(n);
  for (KeyframeId n : candidates) {
    if (n == kf || n == first || map.IsLocked(n)) continue;
    const Keyframe* k = map.GetKeyframe(n);
    if (!k) continue;
    int total = 0, redundant = 0;
    for (const Keypoint& kp : k->keypoints) {
      if (kp.map_point_id == kInvalidId) continue;
      const MapPoint* p = map.GetPoint(kp.map_point_id);
      if (!p) continue;
      ++total;
      redundant += static_cast<int>(p->observers.size()) - 1 >= options.min_other_observers;
    }
    if (total > 0 && redundant >= options.redundant_ratio * total) {
      map.RemoveKeyframe(n);
      removed.push_back(n);
    }
  }
  return removed;
}

namespace {

void WritePose(std::ostream& out, const Se3Pose& p) {
  const Quat& q = p.quaternion();
  out << q.w() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << p.translation().x() << ' '
      << p.translation().y() << ' ' << p.translation().z();
}

Se3Pose ReadPose(std::istream& in) {
  double qw, qx, qy, qz, tx, ty, tz;
  in >> qw >> qx >> qy >> qz >> tx >> ty >> tz;
  return Se3Pose(Quat(qw, qx, qy, qz), Vec3(tx, ty, tz));
}

void WriteCamera(std::ostream& out, const CameraModel& c) {
  out << c.fx << ' ' << c.fy << ' ' << c.cx << ' ' << c.cy << ' ' << c.width << ' ' << c.height;
}

CameraModel ReadCamera(std::istream& in) {
  CameraModel c;
  in >> c.fx >> c.fy >> c.cx >> c.cy >> c.width >> c.height;
  return c;
}

void Expect(std::istream& in, const std::string& word) {
  std::string w;
  if (!(in >> w) || w != word) throw std::runtime_error("ba problem: expected '" + word + "'");
}

}  // namespace

void WriteBaProblem(std::ostream& out, const BaProblem& problem) {
  const auto precision = out.precision(17);
  out << "ba_problem 1\ncamera ";
  WriteCamera(out, problem.camera);
  out << "\nrig " << problem.rig.has_value();
  if (problem.rig) {
    out << ' ';
    WriteCamera(out, problem.rig->right);
    out << ' ';
    WritePose(out, problem.rig->t_rl);
  }
  out << "\nepoch " << problem.epoch << "\nposes " << problem.poses.size() << '\n';
  for (const BaPose& p : problem.poses) {
    out << p.id << ' ' << p.fixed << ' ';
    WritePose(out, p.pose_wc);
    out << '\n';
  }
  out << "points " << problem.points.size() << '\n';
  for (const BaPoint& p : problem.points) {
    out << p.id << ' ' << p.anchor << ' ' << p.fixed << ' ' << p.bearing.x() << ' ' << p.bearing.y()
        << ' ' << p.bearing.z() << ' ' << p.inv_depth << '\n';
  }
  out << "observations " << problem.observations.size() << '\n';
  for (const BaObservation& o : problem.observations) {
    out << o.pose << ' ' << o.point << ' ' << o.px.x() << ' ' << o.px.y() << ' ' << o.has_right << ' '
        << o.right_px.x() << ' ' << o.right_px.y() << '\n';
  }
  out.precision(precision);
}

BaProblem ReadBaProblem(std::istream& in) {
  BaProblem problem;
  Expect(in, "ba_problem");
  int version = 0;
  in >> version;
  if (version != 1) throw std::runtime_error("ba problem: unsupported version");
  Expect(in, "camera");
  problem.camera = ReadCamera(in);
  Expect(in, "rig");
  bool has_rig = false;
  in >> has_rig;
  if (has_rig) {
    StereoRig rig;
    rig.left = problem.camera;
    rig.right = ReadCamera(in);
    rig.t_rl = ReadPose(in);
    problem.rig = rig;
  }
  Expect(in, "epoch");
  in >> problem.epoch;
  std::size_t n = 0;
  Expect(in, "poses");
  in >> n;
  problem.poses.resize(n);
  for (BaPose& p : problem.poses) {
    in >> p.id >> p.fixed;
    p.pose_wc = ReadPose(in);
  }
  Expect(in, "points");
  in >> n;
  problem.points.resize(n);
  for (BaPoint& p : problem.points) {
    in >> p.id >> p.anchor >> p.fixed >> p.bearing.x() >> p.bearing.y() >> p.bearing.z() >> p.inv_depth;
  }
  Expect(in, "observations");
  in >> n;
  problem.observations.resize(n);
  for (BaObservation& o : problem.observations) {
    in >> o.pose >> o.point >> o.px.x() >> o.px.y() >> o.has_right >> o.right_px.x() >> o.right_px.y();
  }
  if (!in) throw std::runtime_error("ba problem: truncated input");
  const int np = static_cast<int>(problem.poses.size()), nl = static_cast<int>(problem.points.size());
  for (const BaPoint& p : problem.points) {
    if (p.anchor < 0 || p.anchor >= np) throw std::runtime_error("ba problem: bad anchor index");
  }
  for (const BaObservation& o : problem.observations) {
    if (o.pose < 0 || o.pose >= np || o.point < 0 || o.point >= nl) {
      throw std::runtime_error("ba problem: bad observation index");
    }
  }
  return problem;
}

}  // namespace vslam
