#include "vslam/imgproc/pyramid.hpp"

#include <algorithm>

namespace vslam {

std::uint32_t ImagePyramid::BoxSum(int x0, int y0, int x1, int y1) const {
  const std::size_t stride = std::size_t(width()) + 1;
  return integral[(y1 + 1) * stride + (x1 + 1)] - integral[y0 * stride + (x1 + 1)] -
         integral[(y1 + 1) * stride + x0] + integral[y0 * stride + x0];
}

GrayImage Downsample(const GrayImage& image) {
  const int w = image.width;
  const int h = image.height;
  // Separable [1 4 6 4 1] / 16 blur evaluated only at even pixels.
  std::vector<int> rows(std::size_t(w) * ((h + 1) / 2));
  const int oh = (h + 1) / 2;
  const int ow = (w + 1) / 2;
  for (int oy = 0; oy < oh; ++oy) {
    const int y = 2 * oy;
    for (int x = 0; x < w; ++x) {
      rows[std::size_t(oy) * w + x] = image.clamped(x, y - 2) + 4 * image.clamped(x, y - 1) +
                                      6 * image.at(x, y) + 4 * image.clamped(x, y + 1) +
                                      image.clamped(x, y + 2);
    }
  }
  GrayImage out(ow, oh);
  for (int oy = 0; oy < oh; ++oy) {
    const int* r = rows.data() + std::size_t(oy) * w;
    auto px = [&](int x) { return r[std::clamp(x, 0, w - 1)]; };
    for (int ox = 0; ox < ow; ++ox) {
      const int x = 2 * ox;
      const int s = px(x - 2) + 4 * px(x - 1) + 6 * px(x) + 4 * px(x + 1) + px(x + 2);
      out.at(ox, oy) = static_cast<std::uint8_t>((s + 128) / 256);
    }
  }
  return out;
}

ImagePyramid BuildPyramid(const GrayImage& image, int num_levels) {
  ImagePyramid pyr;
  pyr.levels.reserve(num_levels);
  pyr.levels.push_back(image);
  for (int l = 1; l < num_levels; ++l) pyr.levels.push_back(Downsample(pyr.levels.back()));

  const int w = image.width;
  const int h = image.height;
  const std::size_t stride = std::size_t(w) + 1;
  pyr.integral.assign(stride * (h + 1), 0);
  for (int y = 0; y < h; ++y) {
    std::uint32_t row = 0;
    for (int x = 0; x < w; ++x) {
      row += image.at(x, y);
      pyr.integral[(y + 1) * stride + x + 1] = pyr.integral[y * stride + x + 1] + row;
    }
  }
  return pyr;
}

}  // namespace vslam
