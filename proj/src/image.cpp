#include "smem/image.hpp"

#include <algorithm>
#include <fstream>
#include <string>

#include "smem/error.hpp"

namespace smem {

RasterImage RasterImage::filled(int width, int height, uint8_t r, uint8_t g, uint8_t b) {
  if (width <= 0 || height <= 0) fail(ErrorKind::kUsage, "image dimensions must be positive");
  RasterImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(3 * static_cast<size_t>(width) * height);
  for (size_t i = 0; i < img.pixels.size(); i += 3) {
    img.pixels[i] = r;
    img.pixels[i + 1] = g;
    img.pixels[i + 2] = b;
  }
  return img;
}

void RasterImage::fill_rect(int x0, int y0, int w, int h, uint8_t r, uint8_t g, uint8_t b) {
  const int x1 = std::min(x0 + w, width), y1 = std::min(y0 + h, height);
  for (int y = std::max(0, y0); y < y1; ++y)
    for (int x = std::max(0, x0); x < x1; ++x) {
      uint8_t* p = px(x, y);
      p[0] = r;
      p[1] = g;
      p[2] = b;
    }
}

void RasterImage::fill_ellipse(int cx, int cy, int rx, int ry, uint8_t r, uint8_t g, uint8_t b) {
  for (int y = std::max(0, cy - ry); y <= std::min(height - 1, cy + ry); ++y)
    for (int x = std::max(0, cx - rx); x <= std::min(width - 1, cx + rx); ++x) {
      const double dx = (x - cx) / static_cast<double>(rx);
      const double dy = (y - cy) / static_cast<double>(ry);
      if (dx * dx + dy * dy <= 1.0) {
        uint8_t* p = px(x, y);
        p[0] = r;
        p[1] = g;
        p[2] = b;
      }
    }
}

void write_ppm(const RasterImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) fail(ErrorKind::kIo, "short write to " + path.string());
}

namespace {
int read_ppm_int(std::istream& in, const std::filesystem::path& path) {
  // skips whitespace and '#' comments per the netpbm grammar
  int c = in.get();
  while (c == '#' || std::isspace(c)) {
    if (c == '#')
      while (c != '\n' && c != EOF) c = in.get();
    c = in.get();
  }
  int value = 0;
  bool any = false;
  while (c >= '0' && c <= '9') {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) fail(ErrorKind::kFormat, "malformed PPM header in " + path.string());
  return value;
}
}  // namespace

RasterImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot read " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '6') fail(ErrorKind::kFormat, path.string() + " is not a binary PPM (P6)");
  RasterImage img;
  img.width = read_ppm_int(in, path);
  img.height = read_ppm_int(in, path);
  const int maxval = read_ppm_int(in, path);
  if (maxval != 255) fail(ErrorKind::kFormat, path.string() + ": unsupported maxval " + std::to_string(maxval));
  if (img.width <= 0 || img.height <= 0) fail(ErrorKind::kFormat, path.string() + ": bad dimensions");
  img.pixels.resize(3 * static_cast<size_t>(img.width) * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    fail(ErrorKind::kFormat, path.string() + ": truncated pixel payload");
  return img;
}

void write_pgm(const std::vector<uint8_t>& gray, int width, int height, const std::filesystem::path& path) {
  if (gray.size() != static_cast<size_t>(width) * height)
    fail(ErrorKind::kDimension, "write_pgm: payload does not match dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
  if (!out) fail(ErrorKind::kIo, "short write to " + path.string());
}

}  // namespace smem
