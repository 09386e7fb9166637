#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace smem {

// 8-bit RGB raster, row-major, data length 3*width*height.
struct RasterImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;

  static RasterImage filled(int width, int height, uint8_t r, uint8_t g, uint8_t b);

  uint8_t* px(int x, int y) { return pixels.data() + 3 * (static_cast<size_t>(y) * width + x); }
  const uint8_t* px(int x, int y) const { return pixels.data() + 3 * (static_cast<size_t>(y) * width + x); }

  void fill_rect(int x0, int y0, int w, int h, uint8_t r, uint8_t g, uint8_t b);
  void fill_ellipse(int cx, int cy, int rx, int ry, uint8_t r, uint8_t g, uint8_t b);
};

// Binary PPM (P6), maxval 255. Header of a 64x64 image is "P6\n64 64\n255\n".
void write_ppm(const RasterImage& img, const std::filesystem::path& path);
RasterImage read_ppm(const std::filesystem::path& path);

// Binary PGM (P5), maxval 255.
void write_pgm(const std::vector<uint8_t>& gray, int width, int height, const std::filesystem::path& path);

}  // namespace smem
