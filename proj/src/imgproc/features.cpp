#include "vslam/imgproc/features.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace vslam {

CellGrid::CellGrid(int width, int height, int cell)
    : cell_size(std::max(1, cell)),
      cols((width + cell_size - 1) / cell_size),
      rows((height + cell_size - 1) / cell_size) {}

int CellGrid::CellOf(const Vec2& px) const {
  const int cx = std::clamp(static_cast<int>(std::floor(px.x() / cell_size)), 0, cols - 1);
  const int cy = std::clamp(static_cast<int>(std::floor(px.y() / cell_size)), 0, rows - 1);
  return cy * cols + cx;
}

std::vector<int> CellGrid::Neighbours(int cell) const {
  std::vector<int> out;
  const int cx = cell % cols;
  const int cy = cell / cols;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const int x = cx + dx;
      const int y = cy + dy;
      if (x >= 0 && x < cols && y >= 0 && y < rows) out.push_back(y * cols + x);
    }
  }
  return out;
}

std::vector<float> ShiTomasiScores(const GrayImage& image) {
  const int w = image.width;
  const int h = image.height;
  std::vector<float> gxx(std::size_t(w) * h), gxy(gxx.size()), gyy(gxx.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto p = [&](int dx, int dy) { return static_cast<int>(image.clamped(x + dx, y + dy)); };
      const float ix = static_cast<float>((p(1, -1) + 2 * p(1, 0) + p(1, 1)) -
                                          (p(-1, -1) + 2 * p(-1, 0) + p(-1, 1))) / 8.0f;
      const float iy = static_cast<float>((p(-1, 1) + 2 * p(0, 1) + p(1, 1)) -
                                          (p(-1, -1) + 2 * p(0, -1) + p(1, -1))) / 8.0f;
      const std::size_t i = std::size_t(y) * w + x;
      gxx[i] = ix * ix;
      gxy[i] = ix * iy;
      gyy[i] = iy * iy;
    }
  }
  std::vector<float> score(gxx.size(), 0.0f);
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      float a = 0, b = 0, c = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const std::size_t i = std::size_t(y + dy) * w + x + dx;
          a += gxx[i];
          b += gxy[i];
          c += gyy[i];
        }
      }
      const float half_tr = 0.5f * (a + c);
      const float disc = std::sqrt(std::max(0.0f, 0.25f * (a - c) * (a - c) + b * b));
      score[std::size_t(y) * w + x] = half_tr - disc;
    }
  }
  return score;
}

namespace {

constexpr std::array<std::array<int, 2>, 16> kCircle{{{0, -3}, {1, -3}, {2, -2}, {3, -1},
                                                      {3, 0},  {3, 1},  {2, 2},  {1, 3},
                                                      {0, 3},  {-1, 3}, {-2, 2}, {-3, 1},
                                                      {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}}};

}  // namespace

int FastScore(const GrayImage& image, int x, int y, int threshold) {
  if (x < 3 || y < 3 || x + 3 >= image.width || y + 3 >= image.height) return 0;
  const int c = image.at(x, y);
  std::array<int, 16> d;
  for (int i = 0; i < 16; ++i) d[i] = image.at(x + kCircle[i][0], y + kCircle[i][1]) - c;
  // Quick rejection on the four compass pixels.
  int bright = 0, dark = 0;
  for (int i = 0; i < 16; i += 4) {
    bright += d[i] > threshold;
    dark += d[i] < -threshold;
  }
  if (bright < 2 && dark < 2) return 0;
  int best = 0;
  for (int start = 0; start < 16; ++start) {
    int min_b = 255, min_d = 255;
    for (int k = 0; k < 9; ++k) {
      const int v = d[(start + k) % 16];
      min_b = std::min(min_b, v);
      min_d = std::min(min_d, -v);
    }
    best = std::max({best, min_b, min_d});
  }
  // Corner iff every arc pixel differs by more than the threshold.
  return best > threshold ? best - 1 : 0;
}

std::vector<Corner> DetectFast(const GrayImage& image, int threshold, int border) {
  const int w = image.width;
  const int h = image.height;
  border = std::max(border, 3);
  std::vector<int> score(std::size_t(w) * h, 0);
  for (int y = border; y < h - border; ++y)
    for (int x = border; x < w - border; ++x) score[std::size_t(y) * w + x] = FastScore(image, x, y, threshold);
  std::vector<Corner> out;
  for (int y = border; y < h - border; ++y) {
    for (int x = border; x < w - border; ++x) {
      const int s = score[std::size_t(y) * w + x];
      if (s <= 0) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int o = score[std::size_t(y + dy) * w + x + dx];
          // Ties resolved toward the earlier pixel in raster order.
          if (o > s || (o == s && (dy < 0 || (dy == 0 && dx < 0)))) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) out.push_back({Vec2(x, y), static_cast<double>(s)});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Corner& a, const Corner& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.px.y() != b.px.y()) return a.px.y() < b.px.y();
    return a.px.x() < b.px.x();
  });
  return out;
}

Vec2 RefineSubpixel(const GrayImage& image, const Vec2& px) {
  constexpr int kHalf = 2;
  Vec2 q = px;
  for (int it = 0; it < 10; ++it) {
    Mat2 a = Mat2::Zero();
    Vec2 b = Vec2::Zero();
    for (int dy = -kHalf; dy <= kHalf; ++dy) {
      for (int dx = -kHalf; dx <= kHalf; ++dx) {
        const double x = q.x() + dx;
        const double y = q.y() + dy;
        const double gx = 0.5 * (image.Bilinear(x + 1, y) - image.Bilinear(x - 1, y));
        const double gy = 0.5 * (image.Bilinear(x, y + 1) - image.Bilinear(x, y - 1));
        const Mat2 ggt = (Mat2() << gx * gx, gx * gy, gx * gy, gy * gy).finished();
        a += ggt;
        b += ggt * Vec2(x, y);
      }
    }
    if (std::abs(a.determinant()) < 1e-9 * std::max(1.0, a.trace() * a.trace())) break;
    const Vec2 next = a.ldlt().solve(b);
    const double step = (next - q).norm();
    q = next;
    if (step < 0.01) break;
  }
  // A refinement that walked out of the window is not trusted.
  if ((q - px).cwiseAbs().maxCoeff() > kHalf) return px;
  return q;
}

std::vector<Corner> DetectGrid(const GrayImage& image, const GridOptions& options,
                               std::span<const Vec2> occupied) {
  std::vector<Corner> out;
  if (image.empty()) return out;
  const CellGrid grid(image.width, image.height, options.cell_size);
  std::vector<bool> taken(grid.Count(), false);
  for (const Vec2& p : occupied) {
    if (p.x() >= 0 && p.y() >= 0 && p.x() < image.width && p.y() < image.height) {
      taken[grid.CellOf(p)] = true;
    }
  }

  const int w = image.width;
  const int h = image.height;
  const int border = std::max(options.border, 3);
  std::vector<float> scores;
  double floor_score = 0.0;
  if (options.detector == DetectorType::kShiTomasi) {
    scores = ShiTomasiScores(image);
    float best = 0.0f;
    for (int y = border; y < h - border; ++y)
      for (int x = border; x < w - border; ++x) best = std::max(best, scores[std::size_t(y) * w + x]);
    if (best <= 0.0f) return out;
    floor_score = options.quality_level * best;
  }

  for (int cell = 0; cell < grid.Count(); ++cell) {
    if (taken[cell]) continue;
    const int x0 = std::max(border, (cell % grid.cols) * grid.cell_size);
    const int y0 = std::max(border, (cell / grid.cols) * grid.cell_size);
    const int x1 = std::min(w - border, (cell % grid.cols + 1) * grid.cell_size);
    const int y1 = std::min(h - border, (cell / grid.cols + 1) * grid.cell_size);
    double best = 0.0;
    int bx = -1, by = -1;
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        double s;
        if (options.detector == DetectorType::kShiTomasi) {
          s = scores[std::size_t(y) * w + x];
          if (s < floor_score) continue;
        } else {
          s = FastScore(image, x, y, options.fast_threshold);
        }
        // Strict comparison keeps the first pixel in raster order on ties.
        if (s > best) {
          best = s;
          bx = x;
          by = y;
        }
      }
    }
    if (bx < 0) continue;
    Vec2 px(bx, by);
    if (options.subpixel) {
      const Vec2 refined = RefineSubpixel(image, px);
      if (grid.CellOf(refined) == cell) px = refined;
    }
    out.push_back({px, best});
  }
  return out;
}

}  // namespace vslam
