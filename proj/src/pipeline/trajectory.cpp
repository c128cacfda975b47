#include "vslam/pipeline/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vslam {

std::string FormatTum(const Trajectory& trajectory) {
  std::string out;
  char buf[256];
  for (const TimedPose& p : trajectory) {
    if (p.gap_before) out += "# gap\n";
    const Vec3& t = p.pose_wc.translation();
    const Quat& q = p.pose_wc.quaternion();
    std::snprintf(buf, sizeof(buf), "%.9f %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", p.timestamp, t.x(),
                  t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
    out += buf;
  }
  return out;
}

void WriteTum(const std::string& path, const Trajectory& trajectory) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << FormatTum(trajectory);
}

Trajectory ParseTum(const std::string& text) {
  Trajectory out;
  std::istringstream in(text);
  std::string line;
  bool gap = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (line[first] == '#') {
      if (line.find("gap") != std::string::npos) gap = true;
      continue;
    }
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double v[8];
    for (double& x : v) {
      if (!(ls >> x)) throw std::runtime_error("malformed trajectory line " + std::to_string(lineno));
    }
    TimedPose p;
    p.timestamp = v[0];
    p.pose_wc = Se3Pose(Quat(v[7], v[4], v[5], v[6]).normalized(), Vec3(v[1], v[2], v[3]));
    p.gap_before = gap;
    gap = false;
    out.push_back(p);
  }
  return out;
}

Trajectory ReadTum(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ParseTum(ss.str());
}

std::vector<std::pair<int, int>> Associate(const Trajectory& est, const Trajectory& gt, double max_dt) {
  std::vector<std::pair<int, int>> out;
  std::vector<double> stamps;
  for (const TimedPose& p : gt) stamps.push_back(p.timestamp);
  const bool sorted = std::is_sorted(stamps.begin(), stamps.end());
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double t = est[i].timestamp;
    int best = -1;
    double best_dt = max_dt;
    if (sorted) {
      const auto it = std::lower_bound(stamps.begin(), stamps.end(), t);
      for (auto c : {it, it == stamps.begin() ? it : std::prev(it)}) {
        if (c == stamps.end()) continue;
        const double dt = std::abs(*c - t);
        if (dt <= best_dt) {
          best_dt = dt;
          best = static_cast<int>(c - stamps.begin());
        }
      }
    } else {
      for (std::size_t j = 0; j < stamps.size(); ++j) {
        const double dt = std::abs(stamps[j] - t);
        if (dt <= best_dt) {
          best_dt = dt;
          best = static_cast<int>(j);
        }
      }
    }
    if (best >= 0) out.emplace_back(static_cast<int>(i), best);
  }
  return out;
}

AlignMode ParseAlignMode(const std::string& s) {
  if (s == "se3") return AlignMode::kSe3;
  if (s == "sim3") return AlignMode::kSim3;
  throw std::runtime_error("unknown alignment: " + s);
}

double AlignedRmse(const std::vector<Vec3>& est, const std::vector<Vec3>& gt, bool with_scale,
                   Similarity3* alignment) {
  const Similarity3 s = Umeyama(est, gt, with_scale);
  if (alignment) *alignment = s;
  double sum = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) sum += (s * est[i] - gt[i]).squaredNorm();
  return est.empty() ? 0.0 : std::sqrt(sum / est.size());
}

namespace {

// Relative pose errors over segments of the given lengths, starting every
// frame (KITTI devkit convention with a step of one).
void RelativeErrors(const std::vector<Se3Pose>& est, const std::vector<Se3Pose>& gt,
                    const std::vector<double>& lengths, double& trans, double& rot) {
  std::vector<double> dist(gt.size(), 0.0);
  for (std::size_t i = 1; i < gt.size(); ++i) {
    dist[i] = dist[i - 1] + (gt[i].translation() - gt[i - 1].translation()).norm();
  }
  double t_sum = 0.0, r_sum = 0.0;
  int n = 0;
  for (std::size_t first = 0; first < gt.size(); ++first) {
    for (double len : lengths) {
      const auto it = std::lower_bound(dist.begin() + first, dist.end(), dist[first] + len);
      if (it == dist.end()) continue;
      const std::size_t last = it - dist.begin();
      const Se3Pose dg = gt[first].inverse() * gt[last];
      const Se3Pose de = est[first].inverse() * est[last];
      const Se3Pose err = dg.inverse() * de;
      t_sum += err.translation().norm() / len;
      r_sum += LogSO3(err.quaternion()).norm() / len;
      ++n;
    }
  }
  trans = n > 0 ? 100.0 * t_sum / n : 0.0;
  rot = n > 0 ? r_sum / n * kRadToDeg : 0.0;
}

}  // namespace

EvalResult Evaluate(const Trajectory& est, const Trajectory& gt, AlignMode align, double max_dt) {
  const auto pairs = Associate(est, gt, max_dt);
  if (pairs.size() < 3) throw std::runtime_error("insufficient association: " + std::to_string(pairs.size()) + " pairs");
  EvalResult r;
  r.pairs = static_cast<int>(pairs.size());
  std::vector<Vec3> pe, pg;
  std::vector<Se3Pose> te, tg;
  for (const auto& [i, j] : pairs) {
    pe.push_back(est[i].pose_wc.translation());
    pg.push_back(gt[j].pose_wc.translation());
  }
  r.ate_rmse = AlignedRmse(pe, pg, align == AlignMode::kSim3, &r.alignment);
  for (const auto& [i, j] : pairs) {
    te.push_back(r.alignment.ApplyTo(est[i].pose_wc));
    tg.push_back(gt[j].pose_wc);
  }
  for (std::size_t k = 1; k < tg.size(); ++k) r.path_length += (tg[k].translation() - tg[k - 1].translation()).norm();
  std::vector<double> lengths;
  for (int s = 1; s <= 8; ++s) lengths.push_back(r.path_length >= 100.0 ? 100.0 * s : 0.1 * s * r.path_length);
  if (r.path_length > 0.0) RelativeErrors(te, tg, lengths, r.rpe_trans, r.rpe_rot);
  return r;
}

std::string EvalResult::ToReport() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "pairs %d\nate_rmse %.9g\nrpe_trans %.9g\nrpe_rot %.9g\npath_length %.9g\nscale %.9g\n",
                pairs, ate_rmse, rpe_trans, rpe_rot, path_length, alignment.scale);
  return buf;
}

std::string PlotSvg(const Trajectory& est, const Trajectory& gt, const EvalResult& eval, double max_dt) {
  std::vector<Vec3> g, e;
  for (const TimedPose& p : gt) g.push_back(p.pose_wc.translation());
  for (const auto& [i, j] : Associate(est, gt, max_dt)) e.push_back(eval.alignment * est[i].pose_wc.translation());
  Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
  for (const Vec3& p : g) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  for (const Vec3& p : e) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  if (g.empty() && e.empty()) lo = hi = Vec3::Zero();
  // The two axes of largest ground-truth extent.
  Vec3 extent = hi - lo;
  int a = 0, b = 1;
  {
    int order[3] = {0, 1, 2};
    std::sort(order, order + 3, [&](int x, int y) { return extent[x] > extent[y]; });
    a = std::min(order[0], order[1]);
    b = std::max(order[0], order[1]);
  }
  const double size = 600.0, margin = 20.0;
  const double span = std::max({extent[a], extent[b], 1e-9});
  auto map = [&](const Vec3& p) {
    return Vec2(margin + (p[a] - lo[a]) / span * size, margin + size - (p[b] - lo[b]) / span * size);
  };
  auto polyline = [&](const std::vector<Vec3>& pts, const char* color) {
    std::string s = "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"";
    char buf[64];
    for (const Vec3& p : pts) {
      const Vec2 q = map(p);
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", q.x(), q.y());
      s += buf;
    }
    return s + "\"/>\n";
  };
  const int w = static_cast<int>(size + 2 * margin);
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" +
                    std::to_string(w + 30) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += polyline(g, "black");
  svg += polyline(e, "red");
  char buf[256];
  const char axes[] = "xyz";
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%g\" y=\"%d\" font-size=\"13\" font-family=\"sans-serif\">ground truth (black), "
                "estimate (red), axes %c-%c, ATE %.4f m</text>\n",
                margin, w + 20, axes[a], axes[b], eval.ate_rmse);
  svg += buf;
  return svg + "</svg>\n";
}

}  // namespace vslam
