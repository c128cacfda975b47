#include "vslam/imgproc/brief.hpp"

#include <algorithm>
#include <cmath>

namespace vslam {
namespace {

struct PatternPair {
  std::int8_t x1, y1, x2, y2;
};

constexpr std::uint64_t SplitMix(std::uint64_t& s) {
  std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Coordinates are sums of three uniform integers in [-5, 5]: a bell shape
// supported on the 31x31 patch.
constexpr std::int8_t PatternCoord(std::uint64_t& s) {
  int v = 0;
  for (int k = 0; k < 3; ++k) v += static_cast<int>(SplitMix(s) % 11) - 5;
  return static_cast<std::int8_t>(v);
}

constexpr std::array<PatternPair, 256> MakePattern() {
  std::array<PatternPair, 256> p{};
  std::uint64_t s = 0x5eed0b51ef000001ULL;
  for (auto& pair : p) {
    do {
      pair.x1 = PatternCoord(s);
      pair.y1 = PatternCoord(s);
      pair.x2 = PatternCoord(s);
      pair.y2 = PatternCoord(s);
    } while (pair.x1 == pair.x2 && pair.y1 == pair.y2);
  }
  return p;
}

constexpr std::array<PatternPair, 256> kPattern = MakePattern();

}  // namespace

BriefDescriptor ComputeBrief(const ImagePyramid& pyramid, const Vec2& px) {
  BriefDescriptor d;
  const int w = pyramid.width();
  const int h = pyramid.height();
  if (w == 0 || h == 0) return d;
  const int cx = static_cast<int>(std::lround(px.x()));
  const int cy = static_cast<int>(std::lround(px.y()));
  auto smooth = [&](int x, int y) {
    x = std::clamp(x, 3, std::max(3, w - 4));
    y = std::clamp(y, 3, std::max(3, h - 4));
    return pyramid.BoxSum(std::max(0, x - 3), std::max(0, y - 3), std::min(w - 1, x + 3),
                          std::min(h - 1, y + 3));
  };
  for (int i = 0; i < 256; ++i) {
    const PatternPair& p = kPattern[i];
    if (smooth(cx + p.x1, cy + p.y1) < smooth(cx + p.x2, cy + p.y2)) {
      d.bits[i >> 6] |= std::uint64_t{1} << (i & 63);
    }
  }
  return d;
}

}  // namespace vslam
