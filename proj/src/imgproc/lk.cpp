#include "vslam/imgproc/lk.hpp"

#include <algorithm>
#include <cmath>
#include <vector>


namespace vslam {
namespace {

// Samples an n x n grid with unit spacing whose top-left sample is at
// (x, y). The fractional offset is shared by all samples, so the bilinear
// weights are computed once.
void SamplePatch(const GrayImage& img, double x, double y, int n, double* out) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const double ax = x - fx;
  const double ay = y - fy;
  const double w00 = (1 - ax) * (1 - ay), w10 = ax * (1 - ay), w01 = (1 - ax) * ay, w11 = ax * ay;
  const int ix = static_cast<int>(fx);
  const int iy = static_cast<int>(fy);
  const bool inside = ix >= 0 && iy >= 0 && ix + n < img.width && iy + n < img.height;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const int px = ix + c;
      const int py = iy + r;
      double v;
      if (inside) {
        const std::uint8_t* p = img.data.data() + std::size_t(py) * img.width + px;
        v = w00 * p[0] + w10 * p[1] + w01 * p[img.width] + w11 * p[img.width + 1];
      } else {
        v = w00 * img.clamped(px, py) + w10 * img.clamped(px + 1, py) +
            w01 * img.clamped(px, py + 1) + w11 * img.clamped(px + 1, py + 1);
      }
      out[r * n + c] = v * (1.0 / 255.0);
    }
  }
}

}  // namespace

std::optional<Vec2> LkTrack(const ImagePyramid& prev, const ImagePyramid& cur, const Vec2& prev_pt,
                            const Vec2& initial_guess, int first_level, int last_level,
                            const LkOptions& options, double* residual) {
  const int levels = std::min(prev.num_levels(), cur.num_levels());
  if (levels == 0) return std::nullopt;
  first_level = std::clamp(first_level, 0, levels - 1);
  last_level = std::clamp(last_level, 0, first_level);
  const int n = options.window;
  const int half = n / 2;
  const int ext = n + 2;  // template plus a one-pixel ring for gradients
  std::vector<double> tmpl(ext * ext), gx(n * n), gy(n * n), warped(n * n);

  Vec2 q = initial_guess;
  for (int level = first_level; level >= last_level; --level) {
    const double scale = 1.0 / (1 << level);
    const GrayImage& ip = prev.level(level);
    const GrayImage& ic = cur.level(level);
    const Vec2 p = prev_pt * scale;
    Vec2 ql = q * scale;
    const bool final_level = level == last_level;
    // Failures at coarser levels keep the current estimate; only the final
    // level decides whether the point is lost.
    if (p.x() < 0 || p.y() < 0 || p.x() > ip.width - 1 || p.y() > ip.height - 1) return std::nullopt;

    SamplePatch(ip, p.x() - half - 1, p.y() - half - 1, ext, tmpl.data());
    Mat2 hess = Mat2::Zero();
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        const int i = r * n + c;
        const int t = (r + 1) * ext + (c + 1);
        gx[i] = 0.5 * (tmpl[t + 1] - tmpl[t - 1]);
        gy[i] = 0.5 * (tmpl[t + ext] - tmpl[t - ext]);
        hess(0, 0) += gx[i] * gx[i];
        hess(0, 1) += gx[i] * gy[i];
        hess(1, 1) += gy[i] * gy[i];
      }
    }
    hess(1, 0) = hess(0, 1);
    const double tr = 0.5 * (hess(0, 0) + hess(1, 1));
    const double det_term =
        std::sqrt(0.25 * (hess(0, 0) - hess(1, 1)) * (hess(0, 0) - hess(1, 1)) + hess(0, 1) * hess(0, 1));
    if ((tr - det_term) / (n * n) < options.min_eigenvalue) {
      if (final_level) return std::nullopt;
      continue;
    }
    const Mat2 hinv = hess.inverse();

    bool converged = false;
    for (int it = 0; it < options.max_iterations; ++it) {
      if (ql.x() < 0 || ql.y() < 0 || ql.x() > ic.width - 1 || ql.y() > ic.height - 1) break;
      SamplePatch(ic, ql.x() - half, ql.y() - half, n, warped.data());
      Vec2 b = Vec2::Zero();
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
          const int i = r * n + c;
          const double e = warped[i] - tmpl[(r + 1) * ext + (c + 1)];
          b.x() += gx[i] * e;
          b.y() += gy[i] * e;
        }
      }
      const Vec2 delta = hinv * b;
      ql -= delta;
      if (delta.norm() < options.epsilon) {
        converged = true;
        break;
      }
    }
    // Coarser levels only provide the initialization of finer ones.
    if (ql.x() < 0 || ql.y() < 0 || ql.x() > ic.width - 1 || ql.y() > ic.height - 1) {
      if (final_level) return std::nullopt;
      continue;
    }
    if (!converged && final_level) return std::nullopt;
    if (final_level && (residual || options.max_residual > 0.0)) {
      SamplePatch(ic, ql.x() - half, ql.y() - half, n, warped.data());
      double sum = 0.0;
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) sum += std::abs(warped[r * n + c] - tmpl[(r + 1) * ext + (c + 1)]);
      }
      const double mean = sum / (n * n);
      if (residual) *residual = mean;
      if (options.max_residual > 0.0 && mean > options.max_residual) return std::nullopt;
    }
    q = ql * static_cast<double>(1 << level);
  }

  const double border = options.border * (1 << last_level);
  if (q.x() < border || q.y() < border || q.x() > cur.width() - 1 - border ||
      q.y() > cur.height() - 1 - border) {
    return std::nullopt;
  }
  return q;
}

}  // namespace vslam
