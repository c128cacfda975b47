#pragma once

#include <cstdint>
#include <vector>

#include "vslam/imgproc/image.hpp"

namespace vslam {

inline constexpr int kDefaultPyramidLevels = 4;

// Scale-2 Gaussian pyramid. Level L has size ceil(size_0 / 2^L); pixel i at
// level L sits at 2^L * i at level 0. The level-0 integral image is kept
// for descriptor smoothing.
struct ImagePyramid {
  std::vector<GrayImage> levels;
  std::vector<std::uint32_t> integral;  // (w+1) x (h+1), row-major

  int num_levels() const { return static_cast<int>(levels.size()); }
  const GrayImage& level(int l) const { return levels[l]; }
  int width() const { return levels.empty() ? 0 : levels[0].width; }
  int height() const { return levels.empty() ? 0 : levels[0].height; }
  // Sum over the inclusive rectangle [x0, x1] x [y0, y1] of level 0.
  std::uint32_t BoxSum(int x0, int y0, int x1, int y1) const;
};

// Level 0 is the input as given (contrast enhancement is the caller's job).
ImagePyramid BuildPyramid(const GrayImage& image, int num_levels = kDefaultPyramidLevels);

GrayImage Downsample(const GrayImage& image);

}  // namespace vslam
