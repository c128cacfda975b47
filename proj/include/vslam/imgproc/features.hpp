#pragma once

#include <span>
#include <vector>

#include "vslam/common/types.hpp"
#include "vslam/imgproc/image.hpp"

namespace vslam {

enum class DetectorType { kShiTomasi, kFast };

struct Corner {
  Vec2 px;
  double score = 0.0;
};

struct GridOptions {
  int cell_size = 35;
  DetectorType detector = DetectorType::kShiTomasi;
  // Shi-Tomasi candidates must reach quality_level * best score in the image.
  double quality_level = 0.01;
  int fast_threshold = 20;
  int border = 8;
  bool subpixel = true;
};

// Cell grid covering the image; cells on the right/bottom edge may be partial.
struct CellGrid {
  int cell_size = 35;
  int cols = 0;
  int rows = 0;

  CellGrid(int width, int height, int cell);
  int CellOf(const Vec2& px) const;
  int Count() const { return cols * rows; }
  // Indices of the 8-connected neighbours of a cell (not including itself).
  std::vector<int> Neighbours(int cell) const;
};

// Shi-Tomasi minimum-eigenvalue map (Sobel gradients, 3x3 window).
std::vector<float> ShiTomasiScores(const GrayImage& image);

// FAST-9 score: the largest threshold for which (x, y) is still a corner,
// 0 when it is not a corner at `threshold`.
int FastScore(const GrayImage& image, int x, int y, int threshold);

// FAST-9 corners with 3x3 non-maximum suppression, ordered by descending
// score, then y, then x.
std::vector<Corner> DetectFast(const GrayImage& image, int threshold, int border = 8);

// Best corner of every grid cell that holds none of the `occupied`
// positions. Output is in row-major cell order.
std::vector<Corner> DetectGrid(const GrayImage& image, const GridOptions& options,
                               std::span<const Vec2> occupied);

// Iterative gradient-based refinement on a 5x5 window (at most 10 steps).
Vec2 RefineSubpixel(const GrayImage& image, const Vec2& px);

}  // namespace vslam
