#pragma once

#include <array>
#include <bit>
#include <cstdint>

#include "vslam/common/types.hpp"
#include "vslam/imgproc/pyramid.hpp"

namespace vslam {

struct BriefDescriptor {
  std::array<std::uint64_t, 4> bits{};

  bool operator==(const BriefDescriptor& o) const { return bits == o.bits; }
  bool operator<(const BriefDescriptor& o) const { return bits < o.bits; }
  bool bit(int i) const { return (bits[i >> 6] >> (i & 63)) & 1u; }
};

inline int HammingDistance(const BriefDescriptor& a, const BriefDescriptor& b) {
  return std::popcount(a.bits[0] ^ b.bits[0]) + std::popcount(a.bits[1] ^ b.bits[1]) +
         std::popcount(a.bits[2] ^ b.bits[2]) + std::popcount(a.bits[3] ^ b.bits[3]);
}

// 256 comparisons of 7x7 box-smoothed intensities over a fixed 31x31
// pattern on pyramid level 0. Samples falling off the image are clamped to
// the border.
BriefDescriptor ComputeBrief(const ImagePyramid& pyramid, const Vec2& px);

}  // namespace vslam
