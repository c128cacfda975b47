#include "vslam/imgproc/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace vslam {

std::uint8_t GrayImage::clamped(int x, int y) const {
  x = std::clamp(x, 0, width - 1);
  y = std::clamp(y, 0, height - 1);
  return at(x, y);
}

double GrayImage::Bilinear(double x, double y) const {
  x = std::clamp(x, 0.0, width - 1.0);
  y = std::clamp(y, 0.0, height - 1.0);
  const int x0 = std::min(static_cast<int>(x), width - 2 < 0 ? 0 : width - 2);
  const int y0 = std::min(static_cast<int>(y), height - 2 < 0 ? 0 : height - 2);
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double ax = x - x0;
  const double ay = y - y0;
  const double top = (1.0 - ax) * at(x0, y0) + ax * at(x1, y0);
  const double bot = (1.0 - ax) * at(x0, y1) + ax * at(x1, y1);
  return (1.0 - ay) * top + ay * bot;
}

namespace {

GrayImage ReadPgm(std::ifstream& in, const std::string& path) {
  std::string magic;
  in >> magic;
  auto next_int = [&]() {
    int v = 0;
    while (in >> std::ws && in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
    }
    if (!(in >> v)) throw std::runtime_error("malformed PGM header: " + path);
    return v;
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    throw std::runtime_error("unsupported PGM: " + path);
  }
  in.get();
  GrayImage img(w, h);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (!in) throw std::runtime_error("truncated PGM: " + path);
  return img;
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

GrayImage ReadPng(const std::string& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("failed to decode PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  png_set_strip_alpha(png);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  std::vector<png_byte> buffer(std::size_t(w) * h * channels);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = buffer.data() + std::size_t(y) * w * channels;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  GrayImage img(w, h);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const png_byte* p = buffer.data() + i * channels;
    if (channels >= 3) {
      img.data[i] = static_cast<std::uint8_t>(
          std::lround(std::clamp(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2], 0.0, 255.0)));
    } else {
      img.data[i] = p[0];
    }
  }
  return img;
}

}  // namespace

GrayImage ReadImage(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] == 'P' && magic[1] == '5') {
    in.seekg(0);
    return ReadPgm(in, path);
  }
  in.close();
  return ReadPng(path);
}

void WritePgm(const std::string& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P5\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data.data()),
            static_cast<std::streamsize>(image.data.size()));
}

void WritePng(const std::string& path, const GrayImage& image) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed to encode PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(image.data.data() + std::size_t(y) * image.width));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace vslam
