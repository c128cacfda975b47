#pragma once

#include "vslam/imgproc/image.hpp"

namespace vslam {

struct ClaheOptions {
  double clip_limit = 3.0;
  int tiles_x = 8;
  int tiles_y = 8;
};

// Contrast-limited adaptive histogram equalization with bilinear blending of
// the per-tile mappings. clip_limit <= 0 or infinite disables clipping.
// Falls back to global equalization when a tile would be under 2 px wide.
GrayImage Clahe(const GrayImage& image, const ClaheOptions& options = {});

GrayImage EqualizeHistogram(const GrayImage& image);

}  // namespace vslam
