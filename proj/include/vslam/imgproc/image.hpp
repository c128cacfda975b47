#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vslam {

// Row-major 8-bit grayscale image.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0) : width(w), height(h), data(std::size_t(w) * h, fill) {}

  bool empty() const { return data.empty(); }
  std::uint8_t& at(int x, int y) { return data[std::size_t(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return data[std::size_t(y) * width + x]; }
  // Border-clamped access.
  std::uint8_t clamped(int x, int y) const;
  // Bilinear sample; coordinates are clamped to the image.
  double Bilinear(double x, double y) const;
};

// Loads binary PGM (P5) or PNG. Color PNGs are converted by luminance.
// Throws std::runtime_error on failure.
GrayImage ReadImage(const std::string& path);
void WritePgm(const std::string& path, const GrayImage& image);
void WritePng(const std::string& path, const GrayImage& image);

}  // namespace vslam
