#include "vslam/geometry/epipolar.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "vslam/geometry/triangulation.hpp"

namespace vslam {
namespace {

// Dense polynomial in (x, y, z) of total degree <= 3.
struct Poly3 {
  double c[4][4][4] = {};

  static Poly3 Linear(double x, double y, double z, double w) {
    Poly3 p;
    p.c[1][0][0] = x;
    p.c[0][1][0] = y;
    p.c[0][0][1] = z;
    p.c[0][0][0] = w;
    return p;
  }

  Poly3 operator*(const Poly3& o) const {
    Poly3 r;
    for (int a = 0; a <= 3; ++a)
      for (int b = 0; a + b <= 3; ++b)
        for (int d = 0; a + b + d <= 3; ++d) {
          if (c[a][b][d] == 0.0) continue;
          for (int e = 0; a + e <= 3; ++e)
            for (int f = 0; a + b + d + e + f <= 3; ++f)
              for (int g = 0; a + b + d + e + f + g <= 3; ++g)
                r.c[a + e][b + f][d + g] += c[a][b][d] * o.c[e][f][g];
        }
    return r;
  }
  Poly3 operator+(const Poly3& o) const {
    Poly3 r = *this;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        for (int d = 0; d < 4; ++d) r.c[a][b][d] += o.c[a][b][d];
    return r;
  }
  Poly3 operator-(const Poly3& o) const {
    Poly3 r = *this;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        for (int d = 0; d < 4; ++d) r.c[a][b][d] -= o.c[a][b][d];
    return r;
  }
  Poly3 Scaled(double s) const {
    Poly3 r = *this;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        for (int d = 0; d < 4; ++d) r.c[a][b][d] *= s;
    return r;
  }
};

// Monomial columns: the ten cubic terms first, then the quotient basis
// {x^2, xy, xz, y^2, yz, z^2, x, y, z, 1}.
constexpr int kMonomials[20][3] = {
    {3, 0, 0}, {2, 1, 0}, {2, 0, 1}, {1, 2, 0}, {1, 1, 1}, {1, 0, 2}, {0, 3, 0},
    {0, 2, 1}, {0, 1, 2}, {0, 0, 3}, {2, 0, 0}, {1, 1, 0}, {1, 0, 1}, {0, 2, 0},
    {0, 1, 1}, {0, 0, 2}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0, 0, 0}};

double PointLineDistance(const Vec3& line, const Vec3& p) {
  const double n = std::hypot(line.x(), line.y());
  if (n < 1e-15) return std::numeric_limits<double>::max();
  return std::abs(line.dot(p)) / n;
}

}  // namespace

double EpipolarDistance(const Mat3& essential, const Vec3& bearing_a, const Vec3& bearing_b,
                        const CameraModel& camera) {
  const Vec3 a = bearing_a / bearing_a.z();
  const Vec3 b = bearing_b / bearing_b.z();
  const double db = PointLineDistance(essential * a, b);
  const double da = PointLineDistance(essential.transpose() * b, a);
  return std::max(da, db) * camera.MeanFocal();
}

Mat3 EssentialFromPose(const Se3Pose& t_ba) { return Hat(t_ba.translation()) * t_ba.rotation(); }

std::vector<Mat3> SolveEssentialFivePoint(std::span<const Vec3> bearings_a,
                                          std::span<const Vec3> bearings_b) {
  Eigen::Matrix<double, 9, 9> q = Eigen::Matrix<double, 9, 9>::Zero();
  for (int i = 0; i < 5; ++i) {
    const Vec3& a = bearings_a[i];
    const Vec3& b = bearings_b[i];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) q(i, 3 * r + c) = b(r) * a(c);
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, 9, 9>> svd(q, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 9, 9>& v = svd.matrixV();
  // E = x * X + y * Y + z * Z + W over the null space.
  const auto basis_x = v.col(5);
  const auto basis_y = v.col(6);
  const auto basis_z = v.col(7);
  const auto basis_w = v.col(8);

  Poly3 e[3][3];
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      const int k = 3 * r + c;
      e[r][c] = Poly3::Linear(basis_x(k), basis_y(k), basis_z(k), basis_w(k));
    }

  Poly3 eet[3][3];
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      eet[r][c] = e[r][0] * e[c][0] + e[r][1] * e[c][1] + e[r][2] * e[c][2];
  const Poly3 trace = eet[0][0] + eet[1][1] + eet[2][2];

  std::array<Poly3, 10> constraints;
  constraints[0] = e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1]) -
                   e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0]) +
                   e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0]);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      const Poly3 eete = eet[r][0] * e[0][c] + eet[r][1] * e[1][c] + eet[r][2] * e[2][c];
      constraints[1 + 3 * r + c] = eete.Scaled(2.0) - trace * e[r][c];
    }

  Eigen::Matrix<double, 10, 20> m;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 20; ++j)
      m(i, j) = constraints[i].c[kMonomials[j][0]][kMonomials[j][1]][kMonomials[j][2]];

  const Eigen::Matrix<double, 10, 10> cubic = m.leftCols<10>();
  Eigen::FullPivLU<Eigen::Matrix<double, 10, 10>> lu(cubic);
  if (lu.rank() < 10) return {};
  const Eigen::Matrix<double, 10, 10> g = lu.solve(m.rightCols<10>());

  // Multiplication-by-x on the basis; each cubic monomial equals -g_row * basis.
  Eigen::Matrix<double, 10, 10> action = Eigen::Matrix<double, 10, 10>::Zero();
  action.row(0) = -g.row(0);  // x * x^2 = x^3
  action.row(1) = -g.row(1);  // x * xy  = x^2 y
  action.row(2) = -g.row(2);  // x * xz  = x^2 z
  action.row(3) = -g.row(3);  // x * y^2 = x y^2
  action.row(4) = -g.row(4);  // x * yz  = xyz
  action.row(5) = -g.row(5);  // x * z^2 = x z^2
  action(6, 0) = 1.0;         // x * x = x^2
  action(7, 1) = 1.0;         // x * y = xy
  action(8, 2) = 1.0;         // x * z = xz
  action(9, 6) = 1.0;         // x * 1 = x

  Eigen::EigenSolver<Eigen::Matrix<double, 10, 10>> eig(action);
  if (eig.info() != Eigen::Success) return {};
  std::vector<Mat3> out;
  for (int i = 0; i < 10; ++i) {
    const auto lambda = eig.eigenvalues()(i);
    if (std::abs(lambda.imag()) > 1e-8 * std::max(1.0, std::abs(lambda.real()))) continue;
    const Eigen::Matrix<std::complex<double>, 10, 1> vec = eig.eigenvectors().col(i);
    if (std::abs(vec(9)) < 1e-14) continue;
    const double x = (vec(6) / vec(9)).real();
    const double y = (vec(7) / vec(9)).real();
    const double z = (vec(8) / vec(9)).real();
    Eigen::Matrix<double, 9, 1> ev = x * basis_x + y * basis_y + z * basis_z + basis_w;
    Mat3 essential;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) essential(r, c) = ev(3 * r + c);
    const double n = essential.norm();
    if (n < 1e-12) continue;
    out.push_back(essential / n);
  }
  return out;
}

std::array<Se3Pose, 4> DecomposeEssential(const Mat3& essential) {
  Eigen::JacobiSVD<Mat3> svd(essential, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  Mat3 v = svd.matrixV();
  if (u.determinant() < 0.0) u.col(2) *= -1.0;
  if (v.determinant() < 0.0) v.col(2) *= -1.0;
  Mat3 w;
  w << 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0;
  const Mat3 r1 = u * w * v.transpose();
  const Mat3 r2 = u * w.transpose() * v.transpose();
  const Vec3 t = u.col(2);
  return {Se3Pose(r1, t), Se3Pose(r1, -t), Se3Pose(r2, t), Se3Pose(r2, -t)};
}

RelativePose RecoverPose(const Mat3& essential, std::span<const Vec3> bearings_a,
                         std::span<const Vec3> bearings_b, const std::vector<bool>& mask) {
  RelativePose best;
  best.num_cheiral = -1;
  for (const Se3Pose& cand : DecomposeEssential(essential)) {
    int count = 0;
    for (std::size_t i = 0; i < bearings_a.size(); ++i) {
      if (!mask.empty() && !mask[i]) continue;
      if (Triangulate(Se3Pose(), cand, bearings_a[i], bearings_b[i], 0.0)) ++count;
    }
    if (count > best.num_cheiral) {
      best.num_cheiral = count;
      best.t_ba = cand;
    }
  }
  return best;
}

int RequiredIterations(double inlier_ratio, int sample_size, double confidence, int max_iterations) {
  const double p = std::pow(std::clamp(inlier_ratio, 0.0, 1.0), sample_size);
  if (p >= 1.0 - 1e-12) return 1;
  if (p <= 1e-12) return max_iterations;
  const double n = std::log(1.0 - confidence) / std::log(1.0 - p);
  return static_cast<int>(std::clamp(std::ceil(n), 1.0, static_cast<double>(max_iterations)));
}

EssentialRansacResult EstimateEssentialRansac(std::span<const Vec3> bearings_a,
                                              std::span<const Vec3> bearings_b,
                                              const CameraModel& camera,
                                              const RansacOptions& options, Rng& rng) {
  EssentialRansacResult result;
  const int n = static_cast<int>(bearings_a.size());
  result.inliers.assign(n, false);
  if (n < 5) return result;

  int needed = options.max_iterations;
  std::array<Vec3, 5> sa;
  std::array<Vec3, 5> sb;
  std::vector<bool> mask(n);
  const double thr2 = options.threshold_px * options.threshold_px;
  double best_cost = std::numeric_limits<double>::infinity();

  // MSAC: truncated quadratic cost, so that among models with similar
  // support the one fitting its inliers best wins. Returns true on a new best.
  auto score = [&](const std::vector<int>& sample) {
    for (int k = 0; k < 5; ++k) {
      sa[k] = bearings_a[sample[k]];
      sb[k] = bearings_b[sample[k]];
    }
    bool improved = false;
    for (const Mat3& e : SolveEssentialFivePoint(sa, sb)) {
      int count = 0;
      double cost = 0.0;
      for (int i = 0; i < n; ++i) {
        const double d = EpipolarDistance(e, bearings_a[i], bearings_b[i], camera);
        mask[i] = d <= options.threshold_px;
        count += mask[i];
        cost += std::min(d * d, thr2);
      }
      if (cost < best_cost) {
        best_cost = cost;
        result.num_inliers = count;
        result.essential = e;
        result.inliers = mask;
        improved = true;
      }
    }
    return improved;
  };

  for (int it = 0; it < needed && it < options.max_iterations; ++it) {
    ++result.iterations;
    if (!score(rng.SampleDistinct(n, 5))) continue;
    // Local optimization: resample minimal sets inside the new inlier set.
    std::vector<int> inlier_idx;
    for (int i = 0; i < n; ++i) {
      if (result.inliers[i]) inlier_idx.push_back(i);
    }
    if (inlier_idx.size() > 5) {
      for (int lo = 0; lo < 10; ++lo) {
        std::vector<int> sample = rng.SampleDistinct(static_cast<int>(inlier_idx.size()), 5);
        for (int& k : sample) k = inlier_idx[k];
        score(sample);
      }
    }
    needed = RequiredIterations(static_cast<double>(result.num_inliers) / n, 5, options.confidence,
                                options.max_iterations);
  }
  result.success = result.num_inliers >= std::max(5, options.min_inliers);
  return result;
}

}  // namespace vslam
