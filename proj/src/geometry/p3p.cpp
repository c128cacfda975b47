#include "vslam/geometry/p3p.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "vslam/geometry/alignment.hpp"

namespace vslam {
namespace {

using Poly = std::array<double, 5>;  // c[0] + c[1] v + ... + c[4] v^4

Poly Mul(const Poly& a, const Poly& b) {
  Poly r{};
  for (int i = 0; i < 5; ++i)
    for (int j = 0; i + j < 5; ++j) r[i + j] += a[i] * b[j];
  return r;
}

Poly Add(const Poly& a, const Poly& b, double sb = 1.0) {
  Poly r{};
  for (int i = 0; i < 5; ++i) r[i] = a[i] + sb * b[i];
  return r;
}

double Eval(const Poly& p, double v) {
  double r = 0.0;
  for (int i = 4; i >= 0; --i) r = r * v + p[i];
  return r;
}

std::vector<double> RealRoots(const Poly& p) {
  int degree = 4;
  const double scale = std::max({std::abs(p[0]), std::abs(p[1]), std::abs(p[2]), std::abs(p[3]),
                                 std::abs(p[4])});
  if (scale == 0.0) return {};
  while (degree > 0 && std::abs(p[degree]) < 1e-14 * scale) --degree;
  if (degree == 0) return {};
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
  for (int i = 0; i < degree; ++i) companion(0, i) = -p[degree - 1 - i] / p[degree];
  for (int i = 1; i < degree; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> eig(companion, false);
  std::vector<double> roots;
  for (int i = 0; i < degree; ++i) {
    const auto z = eig.eigenvalues()(i);
    if (std::abs(z.imag()) > 1e-6 * std::max(1.0, std::abs(z.real()))) continue;
    double v = z.real();
    // Newton polish.
    for (int k = 0; k < 5; ++k) {
      double f = 0.0;
      double df = 0.0;
      for (int j = degree; j >= 0; --j) {
        df = df * v + f;
        f = f * v + p[j];
      }
      if (std::abs(df) < 1e-300) break;
      v -= f / df;
    }
    roots.push_back(v);
  }
  return roots;
}

}  // namespace

std::vector<Se3Pose> SolveP3P(std::span<const Vec3> points_w, std::span<const Vec3> bearings) {
  std::vector<Se3Pose> solutions;
  const Vec3& p1 = points_w[0];
  const Vec3& p2 = points_w[1];
  const Vec3& p3 = points_w[2];
  const double span = std::max((p2 - p1).norm(), (p3 - p1).norm());
  if (span <= 0.0 || (p2 - p1).cross(p3 - p1).norm() < 1e-9 * span * span) return solutions;

  const Vec3 j1 = bearings[0].normalized();
  const Vec3 j2 = bearings[1].normalized();
  const Vec3 j3 = bearings[2].normalized();
  const double a2 = (p2 - p3).squaredNorm();
  const double b2 = (p1 - p3).squaredNorm();
  const double c2 = (p1 - p2).squaredNorm();
  const double ca = j2.dot(j3);
  const double cb = j1.dot(j3);
  const double cg = j1.dot(j2);

  // With s2 = u s1 and s3 = v s1 the law of cosines gives two equations in
  // (u, v); eliminating u yields a quartic in v.
  const Poly q{1.0, -2.0 * cb, 1.0, 0.0, 0.0};         // 1 + v^2 - 2 v cb
  const Poly one_minus_v2{1.0, 0.0, -1.0, 0.0, 0.0};   // 1 - v^2
  Poly scaled_q = q;
  for (double& c : scaled_q) c *= (a2 - c2) / b2;
  const Poly num = Add(scaled_q, one_minus_v2);        // N(v)
  const Poly den{2.0 * cg, -2.0 * ca, 0.0, 0.0, 0.0};  // D(v), u = N / D

  Poly quartic = Add(Mul(den, den), Mul(num, num));
  quartic = Add(quartic, Mul(num, den), -2.0 * cg);
  Poly qd2 = Mul(q, Mul(den, den));
  quartic = Add(quartic, qd2, -c2 / b2);

  for (double v : RealRoots(quartic)) {
    if (v <= 0.0) continue;
    const double d = Eval(den, v);
    if (std::abs(d) < 1e-12) continue;
    const double u = Eval(num, v) / d;
    if (u <= 0.0) continue;
    const double qv = Eval(q, v);
    if (qv <= 0.0) continue;
    const double s1 = std::sqrt(b2 / qv);
    const std::array<Vec3, 3> cam{s1 * j1, u * s1 * j2, v * s1 * j3};
    const std::array<Vec3, 3> world{p1, p2, p3};
    const Similarity3 sim = Umeyama(world, cam, false);
    solutions.emplace_back(sim.rotation, sim.translation);
  }
  return solutions;
}

P3PRansacResult EstimatePoseP3PRansac(std::span<const Vec3> points_w,
                                      std::span<const Vec2> undist_px, const CameraModel& camera,
                                      const RansacOptions& options, Rng& rng) {
  P3PRansacResult result;
  const int n = static_cast<int>(points_w.size());
  result.inliers.assign(n, false);
  if (n < 4) return result;

  std::vector<Vec3> bearings(n);
  for (int i = 0; i < n; ++i) bearings[i] = camera.Unproject(undist_px[i]);
  const double thr2 = options.threshold_px * options.threshold_px;

  auto reproj_sq = [&](const Se3Pose& pose, int i) {
    const auto px = Project(camera, pose, points_w[i]);
    if (!px) return std::numeric_limits<double>::max();
    return (*px - undist_px[i]).squaredNorm();
  };

  int needed = options.max_iterations;
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<bool> mask(n);
  for (int it = 0; it < needed && it < options.max_iterations; ++it) {
    const std::vector<int> s = rng.SampleDistinct(n, 4);
    const std::array<Vec3, 3> pw{points_w[s[0]], points_w[s[1]], points_w[s[2]]};
    const std::array<Vec3, 3> bw{bearings[s[0]], bearings[s[1]], bearings[s[2]]};
    const std::vector<Se3Pose> cands = SolveP3P(pw, bw);
    // Disambiguate with the fourth point.
    const Se3Pose* chosen = nullptr;
    double best_err = std::numeric_limits<double>::max();
    for (const Se3Pose& c : cands) {
      const double e = reproj_sq(c, s[3]);
      if (e < best_err) {
        best_err = e;
        chosen = &c;
      }
    }
    if (!chosen || best_err > thr2) continue;
    int count = 0;
    double cost = 0.0;
    for (int i = 0; i < n; ++i) {
      const double e2 = reproj_sq(*chosen, i);
      mask[i] = e2 <= thr2;
      count += mask[i];
      cost += std::min(e2, thr2);
    }
    if (cost < best_cost) {
      best_cost = cost;
      result.num_inliers = count;
      result.pose_cw = *chosen;
      result.inliers = mask;
      needed = RequiredIterations(static_cast<double>(count) / n, 4, options.confidence,
                                  options.max_iterations);
    }
  }
  result.success = result.num_inliers >= std::max(4, options.min_inliers);
  return result;
}

}  // namespace vslam
