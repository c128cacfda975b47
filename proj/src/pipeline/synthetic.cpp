#include "vslam/pipeline/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "vslam/common/keyvalue.hpp"
#include "vslam/common/random.hpp"

namespace vslam {

SyntheticSpec ParseSyntheticSpec(const std::string& text) {
  const KeyValues kv = KeyValues::Parse(text);
  SyntheticSpec s;
  kv.Get("trajectory", s.trajectory);
  kv.Get("frames", s.frames);
  kv.Get("rate_hz", s.rate_hz);
  kv.Get("width", s.width);
  kv.Get("height", s.height);
  kv.Get("focal", s.focal);
  kv.Get("baseline", s.baseline);
  kv.Get("stereo", s.stereo);
  kv.Get("noise_px", s.noise_px);
  kv.Get("intensity_noise", s.intensity_noise);
  kv.Get("brightness_drift", s.brightness_drift);
  kv.Get("seed", s.seed);
  kv.Get("dot_density", s.dot_density);
  kv.Get("dot_sigma", s.dot_sigma);
  kv.Get("length", s.length);
  kv.Get("side", s.side);
  kv.Get("radius", s.radius);
  kv.RejectUnused();
  if (s.trajectory != "static" && s.trajectory != "corridor" && s.trajectory != "square" &&
      s.trajectory != "orbit") {
    throw std::runtime_error("unknown trajectory: " + s.trajectory);
  }
  if (s.frames < 1 || s.width < 16 || s.height < 16 || s.rate_hz <= 0 || s.focal <= 0) {
    throw std::runtime_error("invalid synthetic spec");
  }
  return s;
}

SyntheticSpec LoadSyntheticSpec(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return ParseSyntheticSpec(text);
}

namespace {

// Correlation length of the observation noise field, meters.
constexpr double kJitterLattice = 0.25;

Mat3 RotY(double a) {
  Mat3 r;
  r << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return r;
}

Mat3 RotX(double a) {
  Mat3 r;
  r << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return r;
}

// Camera looking along `forward`, image y axis close to world +y (down).
Mat3 LookRotation(const Vec3& forward) {
  const Vec3 z = forward.normalized();
  Vec3 x = Vec3::UnitY().cross(z);
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return r;
}

}  // namespace

SyntheticSequence::SyntheticSequence(const SyntheticSpec& spec) : spec_(spec) {
  CameraModel cam;
  cam.width = spec.width;
  cam.height = spec.height;
  cam.fx = cam.fy = spec.focal;
  cam.cx = 0.5 * (spec.width - 1);
  cam.cy = 0.5 * (spec.height - 1);
  rig_.left = cam;
  rig_.right = cam;
  rig_.t_rl = Se3Pose(Mat3::Identity(), Vec3(-spec.baseline, 0.0, 0.0));
  BuildScene();
  BuildTrajectory();
}

double SyntheticSequence::PathLength() const {
  double len = 0.0;
  for (std::size_t i = 1; i < poses_wc_.size(); ++i) {
    len += (poses_wc_[i].translation() - poses_wc_[i - 1].translation()).norm();
  }
  return len;
}

void SyntheticSequence::AddPlane(const Vec3& origin, const Vec3& u, const Vec3& v, double extent_u,
                                 double extent_v, std::uint64_t stream) {
  Rng rng(spec_.seed, StreamId(0x5CE7E, stream));
  TexturedPlane p;
  p.origin = origin;
  p.u = u.normalized();
  p.v = v.normalized();
  p.extent_u = extent_u;
  p.extent_v = extent_v;
  p.base = rng.Uniform(100.0, 150.0);
  const int n = static_cast<int>(std::lround(spec_.dot_density * extent_u * extent_v));
  p.dots.reserve(n);
  for (int i = 0; i < n; ++i) {
    TextureDot d;
    d.a = rng.Uniform(0.0, extent_u);
    d.b = rng.Uniform(0.0, extent_v);
    d.amplitude = (rng.Uniform() < 0.5 ? -1.0 : 1.0) * rng.Uniform(40.0, 90.0);
    d.index = num_dots_++;
    p.dots.push_back(d);
  }
  planes_.push_back(std::move(p));
  IndexPlane(planes_.back());
}

void SyntheticSequence::AddDot(int plane, double a, double b, double amplitude) {
  TexturedPlane& p = planes_.at(plane);
  p.dots.push_back({a, b, amplitude, num_dots_++});
  IndexPlane(p);
}

void SyntheticSequence::IndexPlane(TexturedPlane& p) {
  p.cell = std::max(3.0 * spec_.dot_sigma, 1e-3);
  p.cols = std::max(1, static_cast<int>(std::ceil(p.extent_u / p.cell)));
  p.rows = std::max(1, static_cast<int>(std::ceil(p.extent_v / p.cell)));
  auto cell_of = [&](const TextureDot& d) {
    const int c = std::clamp(static_cast<int>(d.a / p.cell), 0, p.cols - 1);
    const int r = std::clamp(static_cast<int>(d.b / p.cell), 0, p.rows - 1);
    return r * p.cols + c;
  };
  std::stable_sort(p.dots.begin(), p.dots.end(), [&](const TextureDot& x, const TextureDot& y) {
    return cell_of(x) < cell_of(y);
  });
  p.cell_start.assign(std::size_t(p.cols) * p.rows + 1, 0);
  for (const TextureDot& d : p.dots) ++p.cell_start[cell_of(d) + 1];
  for (std::size_t i = 1; i < p.cell_start.size(); ++i) p.cell_start[i] += p.cell_start[i - 1];
}

void SyntheticSequence::BuildScene() {
  const Vec3 ex = Vec3::UnitX(), ey = Vec3::UnitY(), ez = Vec3::UnitZ();
  std::uint64_t stream = 0;
  auto box = [&](double x0, double x1, double y0, double y1, double z0, double z1) {
    const double w = x1 - x0, h = y1 - y0, d = z1 - z0;
    AddPlane({x0, y0, z0}, ez, ey, d, h, stream++);  // x = x0
    AddPlane({x1, y0, z0}, ez, ey, d, h, stream++);  // x = x1
    AddPlane({x0, y0, z0}, ex, ez, w, d, stream++);  // y = y0
    AddPlane({x0, y1, z0}, ex, ez, w, d, stream++);  // y = y1
    AddPlane({x0, y0, z0}, ex, ey, w, h, stream++);  // z = z0
    AddPlane({x0, y0, z1}, ex, ey, w, h, stream++);  // z = z1
  };
  if (spec_.trajectory == "corridor" || spec_.trajectory == "static") {
    box(-1.5, 1.5, -1.25, 1.25, -3.0, spec_.length + 5.0);
  } else if (spec_.trajectory == "square") {
    const double m = 2.5;
    box(-m, spec_.side + m, -1.25, 1.25, -m, spec_.side + m);
  } else {
    const double r = spec_.radius + 3.0;
    box(-r, r, -1.5, 1.5, -r, r);
    // Central block viewed by the orbiting camera.
    AddPlane({-0.6, -0.6, -0.6}, ex, ey, 1.2, 1.2, stream++);
    AddPlane({-0.6, -0.6, 0.6}, ex, ey, 1.2, 1.2, stream++);
    AddPlane({-0.6, -0.6, -0.6}, ez, ey, 1.2, 1.2, stream++);
    AddPlane({0.6, -0.6, -0.6}, ez, ey, 1.2, 1.2, stream++);
  }
}

void SyntheticSequence::BuildTrajectory() {
  const int n = spec_.frames;
  poses_wc_.clear();
  poses_wc_.reserve(n);
  for (int k = 0; k < n; ++k) {
    const double s = n > 1 ? static_cast<double>(k) / (n - 1) : 0.0;
    if (spec_.trajectory == "static") {
      poses_wc_.emplace_back();
    } else if (spec_.trajectory == "corridor") {
      const Vec3 t(0.3 * std::sin(2 * kPi * s), 0.1 * std::sin(4 * kPi * s), spec_.length * s);
      const Mat3 r = RotY(5.0 * kDegToRad * std::sin(2 * kPi * s)) *
                     RotX(2.0 * kDegToRad * std::sin(4 * kPi * s));
      poses_wc_.emplace_back(r, t);
    } else if (spec_.trajectory == "square") {
      // Rounded square traversed at constant speed: four straight sides of
      // length `side` - 2r joined by quarter circles of radius r.
      const double r = std::min(1.0, 0.25 * spec_.side);
      const double straight = spec_.side - 2.0 * r;
      const double arc = 0.5 * kPi * r;
      const double seg = straight + arc;
      const double d = std::fmod(s * 4.0 * seg, 4.0 * seg);
      const int side = std::min(3, static_cast<int>(d / seg));
      const double local = d - side * seg;
      // Side 0 starts at (0, 0, r) heading +z.
      const Vec2 starts[4] = {{0.0, r}, {r, spec_.side}, {spec_.side, spec_.side - r},
                              {spec_.side - r, 0.0}};
      const Vec2 dirs[4] = {{0.0, 1.0}, {1.0, 0.0}, {0.0, -1.0}, {-1.0, 0.0}};
      const Vec2 lefts[4] = {{1.0, 0.0}, {0.0, -1.0}, {-1.0, 0.0}, {0.0, 1.0}};  // turn side
      Vec2 pos;
      double heading = side * 0.5 * kPi;
      if (local <= straight) {
        pos = starts[side] + local * dirs[side];
      } else {
        const double phi = (local - straight) / r;
        const Vec2 c = starts[side] + straight * dirs[side] + r * lefts[side];
        pos = c - r * std::cos(phi) * lefts[side] + r * std::sin(phi) * dirs[side];
        heading += phi;
      }
      if (k == n - 1) {
        pos = starts[0];
        heading = 0.0;
      }
      poses_wc_.emplace_back(RotY(heading), Vec3(pos.x(), 0.0, pos.y()));
    } else {
      const double phi = 2 * kPi * s;
      const Vec3 t(spec_.radius * std::sin(phi), 0.2 * std::sin(2 * phi),
                   -spec_.radius * std::cos(phi));
      const Mat3 r = k == n - 1 ? poses_wc_.front().rotation() : LookRotation(-t);
      poses_wc_.emplace_back(r, k == n - 1 ? poses_wc_.front().translation() : t);
    }
  }
}

std::optional<Vec3> SyntheticSequence::CastRay(const Se3Pose& pose_wc, const Vec3& bearing) const {
  const Vec3 o = pose_wc.translation();
  const Vec3 dir = pose_wc.rotation() * bearing;
  double best_t = std::numeric_limits<double>::infinity();
  for (const auto& p : planes_) {
    const Vec3 n = p.normal();
    const double denom = n.dot(dir);
    if (std::abs(denom) < 1e-12) continue;
    const double t = n.dot(p.origin - o) / denom;
    if (t <= 1e-6 || t >= best_t) continue;
    const Vec3 hit = o + t * dir - p.origin;
    const double a = hit.dot(p.u), b = hit.dot(p.v);
    if (a < 0 || b < 0 || a > p.extent_u || b > p.extent_v) continue;
    best_t = t;
  }
  if (!std::isfinite(best_t)) return std::nullopt;
  return o + best_t * dir;
}

GrayImage SyntheticSequence::RenderLeft(int k) const { return Render(poses_wc_.at(k), k, 0); }

GrayImage SyntheticSequence::RenderRight(int k) const {
  return Render(poses_wc_.at(k) * rig_.t_rl.inverse(), k, 1);
}

GrayImage SyntheticSequence::Render(const Se3Pose& pose_wc, int k, std::uint64_t stream) const {
  const CameraModel& cam = rig_.left;
  const Mat3 r = pose_wc.rotation();
  const Vec3 o = pose_wc.translation();
  const double sigma2 = spec_.dot_sigma * spec_.dot_sigma;

  // Observation noise: a smooth per-frame displacement field on every
  // plane, so that a patch moves as a whole instead of deforming. Unit
  // Gaussians on a lattice, bilinearly blended and renormalized to unit
  // variance.
  std::vector<double> jitter;
  if (spec_.noise_px > 0.0) {
    jitter.resize(2 * std::size_t(num_dots_));
    for (std::size_t pi = 0; pi < planes_.size(); ++pi) {
      const TexturedPlane& p = planes_[pi];
      const int nu = static_cast<int>(std::ceil(p.extent_u / kJitterLattice)) + 2;
      const int nv = static_cast<int>(std::ceil(p.extent_v / kJitterLattice)) + 2;
      Rng jr(spec_.seed, StreamId(0x717E, k, pi));
      std::vector<double> node(2 * std::size_t(nu) * nv);
      for (double& g : node) g = jr.Normal();
      for (const TextureDot& d : p.dots) {
        const double fu = d.a / kJitterLattice, fv = d.b / kJitterLattice;
        const int iu = std::clamp(static_cast<int>(fu), 0, nu - 2);
        const int iv = std::clamp(static_cast<int>(fv), 0, nv - 2);
        const double du = fu - iu, dv = fv - iv;
        const double w[4] = {(1 - du) * (1 - dv), du * (1 - dv), (1 - du) * dv, du * dv};
        const int n[4] = {iv * nu + iu, iv * nu + iu + 1, (iv + 1) * nu + iu, (iv + 1) * nu + iu + 1};
        const double norm = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2] + w[3] * w[3]);
        for (int c = 0; c < 2; ++c) {
          double v = 0.0;
          for (int q = 0; q < 4; ++q) v += w[q] * node[2 * std::size_t(n[q]) + c];
          jitter[2 * std::size_t(d.index) + c] = std::clamp(v / norm, -2.5, 2.5);
        }
      }
    }
  }
  Rng noise(spec_.seed, StreamId(0x401CE, k, stream));
  const double gain = 1.0 + spec_.brightness_drift * std::sin(2 * kPi * k / 100.0);

  struct PlaneCache {
    Vec3 n;
    double offset;
  };
  std::vector<PlaneCache> pc;
  for (const auto& p : planes_) pc.push_back({p.normal(), p.normal().dot(p.origin - o)});

  GrayImage img(cam.width, cam.height, 0);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Vec3 bearing = cam.Unproject(cam.Undistort(Vec2(x, y)));
      const Vec3 dir = r * bearing;
      double best_t = std::numeric_limits<double>::infinity();
      int best = -1;
      double cos_best = 1.0;
      for (std::size_t i = 0; i < planes_.size(); ++i) {
        const double denom = pc[i].n.dot(dir);
        if (std::abs(denom) < 1e-12) continue;
        const double t = pc[i].offset / denom;
        if (t <= 1e-6 || t >= best_t) continue;
        const Vec3 hit = o + t * dir - planes_[i].origin;
        const double a = hit.dot(planes_[i].u), b = hit.dot(planes_[i].v);
        if (a < 0 || b < 0 || a > planes_[i].extent_u || b > planes_[i].extent_v) continue;
        best_t = t;
        best = static_cast<int>(i);
        cos_best = std::abs(denom) / dir.norm();
      }
      double value = 0.0;
      if (best >= 0) {
        const TexturedPlane& p = planes_[best];
        const Vec3 hit = o + best_t * dir - p.origin;
        const double a = hit.dot(p.u), b = hit.dot(p.v);
        // World size of the pixel footprint, used to prefilter the dots.
        // The jitter uses the fronto-parallel size so that no dot moves by
        // more than noise_px times its draw in the image.
        const double fronto = best_t * dir.norm() / cam.MeanFocal();
        const double foot = fronto / std::max(cos_best, 0.25);
        const double s2 = sigma2 + 0.25 * foot * foot;
        // Dots far below pixel size average out to the base level; fade them
        // instead of summing hundreds of negligible contributions.
        const double scale = sigma2 / s2 * std::min(1.0, (sigma2 / s2 - 0.15) / 0.15);
        value = p.base;
        if (scale <= 0.0) {
          value *= gain;
          if (spec_.intensity_noise > 0.0) value += spec_.intensity_noise * noise.Normal();
          img.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));
          continue;
        }
        const double reach = 3.0 * std::sqrt(s2) + 2.5 * spec_.noise_px * fronto;
        const int c0 = std::max(0, static_cast<int>((a - reach) / p.cell));
        const int c1 = std::min(p.cols - 1, static_cast<int>((a + reach) / p.cell));
        const int r0 = std::max(0, static_cast<int>((b - reach) / p.cell));
        const int r1 = std::min(p.rows - 1, static_cast<int>((b + reach) / p.cell));
        for (int rr = r0; rr <= r1; ++rr) {
          const int end = p.cell_start[rr * p.cols + c1 + 1];
          for (int di = p.cell_start[rr * p.cols + c0]; di < end; ++di) {
            {
              const TextureDot& d = p.dots[di];
              double da = a - d.a, db = b - d.b;
              if (!jitter.empty()) {
                da -= spec_.noise_px * fronto * jitter[2 * std::size_t(d.index)];
                db -= spec_.noise_px * fronto * jitter[2 * std::size_t(d.index) + 1];
              }
              const double q = da * da + db * db;
              if (q > 9.0 * s2) continue;
              value += d.amplitude * scale * std::exp(-0.5 * q / s2);
            }
          }
        }
      }
      value *= gain;
      if (spec_.intensity_noise > 0.0) value += spec_.intensity_noise * noise.Normal();
      img.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));
    }
  }
  return img;
}

namespace {

void WriteSensorYaml(const std::string& path, const CameraModel& cam, const Se3Pose& t_bs,
                     double rate) {
  std::ofstream f(path);
  f << "sensor_type: camera\n";
  f << "comment: synthetic\n";
  f << "T_BS:\n  cols: 4\n  rows: 4\n  data: [";
  const Mat4 m = t_bs.matrix();
  for (int i = 0; i < 16; ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", m(i / 4, i % 4));
    f << buf << (i < 15 ? ", " : "");
  }
  f << "]\n";
  f << "rate_hz: " << rate << "\n";
  f << "resolution: [" << cam.width << ", " << cam.height << "]\n";
  f << "camera_model: pinhole\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "intrinsics: [%.17g, %.17g, %.17g, %.17g]\n", cam.fx, cam.fy,
                cam.cx, cam.cy);
  f << buf;
  f << "distortion_model: radial-tangential\n";
  f << "distortion_coefficients: [0.0, 0.0, 0.0, 0.0]\n";
}

}  // namespace

void WriteSyntheticDataset(const SyntheticSequence& seq, const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root = fs::path(dir) / "mav0";
  const int ncams = seq.spec().stereo ? 2 : 1;
  std::vector<std::int64_t> stamps;
  for (int k = 0; k < seq.size(); ++k) {
    stamps.push_back(std::int64_t(1'000'000'000'000) +
                     std::llround(k * 1e9 / seq.spec().rate_hz));
  }
  for (int c = 0; c < ncams; ++c) {
    const fs::path cam_dir = root / ("cam" + std::to_string(c));
    fs::create_directories(cam_dir / "data");
    WriteSensorYaml((cam_dir / "sensor.yaml").string(), c == 0 ? seq.rig().left : seq.rig().right,
                    c == 0 ? Se3Pose() : seq.rig().t_rl.inverse(), seq.spec().rate_hz);
    std::ofstream csv(cam_dir / "data.csv");
    csv << "#timestamp [ns],filename\n";
    for (int k = 0; k < seq.size(); ++k) {
      const std::string name = std::to_string(stamps[k]) + ".png";
      WritePng((cam_dir / "data" / name).string(), c == 0 ? seq.RenderLeft(k) : seq.RenderRight(k));
      csv << stamps[k] << "," << name << "\n";
    }
  }
  const fs::path gt_dir = root / "state_groundtruth_estimate0";
  fs::create_directories(gt_dir);
  std::ofstream gt(gt_dir / "data.csv");
  std::ofstream tum(fs::path(dir) / "groundtruth.txt");
  gt << "#timestamp, p_RS_R_x [m], p_RS_R_y [m], p_RS_R_z [m], q_RS_w [], q_RS_x [], q_RS_y [], "
        "q_RS_z []\n";
  for (int k = 0; k < seq.size(); ++k) {
    const Se3Pose& p = seq.pose_wc(k);
    const Vec3& t = p.translation();
    const Quat& q = p.quaternion();
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(stamps[k]), t.x(), t.y(), t.z(), q.w(), q.x(), q.y(),
                  q.z());
    gt << buf;
    std::snprintf(buf, sizeof(buf), "%.9f %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", stamps[k] * 1e-9,
                  t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
    tum << buf;
  }
}

}  // namespace vslam
