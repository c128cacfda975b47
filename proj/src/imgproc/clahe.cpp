#include "vslam/imgproc/clahe.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace vslam {
namespace {

using Lut = std::array<std::uint8_t, 256>;

Lut EqualizationLut(const std::array<int, 256>& hist, int total) {
  Lut lut{};
  if (total <= 0) {
    for (int v = 0; v < 256; ++v) lut[v] = static_cast<std::uint8_t>(v);
    return lut;
  }
  const double scale = 255.0 / total;
  int cdf = 0;
  for (int v = 0; v < 256; ++v) {
    cdf += hist[v];
    lut[v] = static_cast<std::uint8_t>(std::clamp(std::lround(cdf * scale), 0L, 255L));
  }
  return lut;
}

void ClipHistogram(std::array<int, 256>& hist, int limit) {
  int excess = 0;
  for (int& h : hist) {
    if (h > limit) {
      excess += h - limit;
      h = limit;
    }
  }
  const int add = excess / 256;
  const int residual = excess % 256;
  for (int& h : hist) h += add;
  if (residual > 0) {
    const int step = std::max(1, 256 / residual);
    for (int v = 0, left = residual; v < 256 && left > 0; v += step, --left) ++hist[v];
  }
}

}  // namespace

GrayImage EqualizeHistogram(const GrayImage& image) {
  std::array<int, 256> hist{};
  for (std::uint8_t v : image.data) ++hist[v];
  const Lut lut = EqualizationLut(hist, static_cast<int>(image.data.size()));
  GrayImage out = image;
  for (std::uint8_t& v : out.data) v = lut[v];
  return out;
}

GrayImage Clahe(const GrayImage& image, const ClaheOptions& options) {
  const int tx = std::max(1, options.tiles_x);
  const int ty = std::max(1, options.tiles_y);
  if (image.width < 2 * tx || image.height < 2 * ty) return EqualizeHistogram(image);

  const int w = image.width;
  const int h = image.height;
  auto x_begin = [&](int i) { return i * w / tx; };
  auto y_begin = [&](int j) { return j * h / ty; };

  std::vector<Lut> luts(std::size_t(tx) * ty);
  const bool clip = options.clip_limit > 0.0 && std::isfinite(options.clip_limit);
  for (int j = 0; j < ty; ++j) {
    for (int i = 0; i < tx; ++i) {
      std::array<int, 256> hist{};
      const int x0 = x_begin(i), x1 = x_begin(i + 1);
      const int y0 = y_begin(j), y1 = y_begin(j + 1);
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) ++hist[image.at(x, y)];
      const int area = (x1 - x0) * (y1 - y0);
      if (clip) {
        const int limit = std::max(1, static_cast<int>(options.clip_limit * area / 256.0));
        ClipHistogram(hist, limit);
      }
      luts[std::size_t(j) * tx + i] = EqualizationLut(hist, area);
    }
  }

  // Tile centers in pixel coordinates.
  std::vector<double> cx(tx), cy(ty);
  for (int i = 0; i < tx; ++i) cx[i] = 0.5 * (x_begin(i) + x_begin(i + 1) - 1);
  for (int j = 0; j < ty; ++j) cy[j] = 0.5 * (y_begin(j) + y_begin(j + 1) - 1);

  auto bracket = [](const std::vector<double>& centers, double p, int& lo, int& hi, double& a) {
    const int n = static_cast<int>(centers.size());
    if (p <= centers.front()) {
      lo = hi = 0;
      a = 0.0;
      return;
    }
    if (p >= centers.back()) {
      lo = hi = n - 1;
      a = 0.0;
      return;
    }
    lo = 0;
    while (lo + 1 < n && centers[lo + 1] <= p) ++lo;
    hi = std::min(lo + 1, n - 1);
    a = hi == lo ? 0.0 : (p - centers[lo]) / (centers[hi] - centers[lo]);
  };

  GrayImage out(w, h);
  std::vector<int> xl(w), xh(w);
  std::vector<double> xa(w);
  for (int x = 0; x < w; ++x) bracket(cx, x, xl[x], xh[x], xa[x]);
  for (int y = 0; y < h; ++y) {
    int yl, yh;
    double ya;
    bracket(cy, y, yl, yh, ya);
    for (int x = 0; x < w; ++x) {
      const std::uint8_t v = image.at(x, y);
      const double v00 = luts[std::size_t(yl) * tx + xl[x]][v];
      const double v10 = luts[std::size_t(yl) * tx + xh[x]][v];
      const double v01 = luts[std::size_t(yh) * tx + xl[x]][v];
      const double v11 = luts[std::size_t(yh) * tx + xh[x]][v];
      const double top = (1.0 - xa[x]) * v00 + xa[x] * v10;
      const double bot = (1.0 - xa[x]) * v01 + xa[x] * v11;
      out.at(x, y) = static_cast<std::uint8_t>(
          std::clamp(std::lround((1.0 - ya) * top + ya * bot), 0L, 255L));
    }
  }
  return out;
}

}  // namespace vslam
