#include "smem/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace smem {

CellRect SpatialFeatures::cell_rect(int location, int width, int height) const {
  const int r = location / grid_cols, c = location % grid_cols;
  const int ch = (height + grid_rows - 1) / grid_rows;
  const int cw = (width + grid_cols - 1) / grid_cols;
  CellRect rect{c * cw, r * ch, std::min((c + 1) * cw, width), std::min((r + 1) * ch, height)};
  return rect;
}

SpatialFeatures extract_grid_patch(const RasterImage& img, int grid_rows, int grid_cols) {
  if (img.width <= 0 || img.height <= 0 || img.pixels.empty())
    fail(ErrorKind::kUsage, "extract_grid_patch: zero-size image");
  if (grid_rows < 1 || grid_cols < 1) fail(ErrorKind::kUsage, "extract_grid_patch: grid must be at least 1x1");
  const int ch = (img.height + grid_rows - 1) / grid_rows;
  const int cw = (img.width + grid_cols - 1) / grid_cols;
  if ((grid_rows - 1) * ch >= img.height || (grid_cols - 1) * cw >= img.width)
    fail(ErrorKind::kUsage, "extract_grid_patch: grid too fine for image");

  SpatialFeatures out;
  out.grid_rows = grid_rows;
  out.grid_cols = grid_cols;
  out.image_w = img.width;
  out.image_h = img.height;
  out.matrix = Tensor({grid_rows * grid_cols, kGridPatchDims});

  // reads clamp to the image edge; cells all have ch*cw pixels
  auto sample = [&](int x, int y) {
    return img.px(std::min(x, img.width - 1), std::min(y, img.height - 1));
  };
  auto intensity = [&](int x, int y) {
    const uint8_t* p = sample(x, y);
    return (p[0] + p[1] + p[2]) / (3.0 * 255.0);
  };

  for (int gr = 0; gr < grid_rows; ++gr)
    for (int gc = 0; gc < grid_cols; ++gc) {
      const int x0 = gc * cw, y0 = gr * ch;
      const int count = cw * ch;
      double sum[3] = {0, 0, 0}, sumsq[3] = {0, 0, 0};
      int red = 0, white = 0, gray = 0;
      for (int y = y0; y < y0 + ch; ++y)
        for (int x = x0; x < x0 + cw; ++x) {
          const uint8_t* p = sample(x, y);
          for (int c = 0; c < 3; ++c) {
            const double v = p[c] / 255.0;
            sum[c] += v;
            sumsq[c] += v * v;
          }
          if (p[0] > 200 && p[1] < 80 && p[2] < 80) ++red;
          if (p[0] > 230 && p[1] > 230 && p[2] > 230) ++white;
          const int hi = std::max({p[0], p[1], p[2]}), lo = std::min({p[0], p[1], p[2]});
          const double mean8 = (p[0] + p[1] + p[2]) / 3.0;
          if (hi - lo < 30 && mean8 >= 60 && mean8 <= 200) ++gray;
        }
      double dx_sum = 0, dy_sum = 0, mag_sum = 0;
      int dx_n = 0, dy_n = 0, mag_n = 0;
      for (int y = y0; y < y0 + ch; ++y)
        for (int x = x0; x < x0 + cw; ++x) {
          const bool has_dx = x + 1 < x0 + cw, has_dy = y + 1 < y0 + ch;
          const double i0 = intensity(x, y);
          double dx = 0, dy = 0;
          if (has_dx) {
            dx = intensity(x + 1, y) - i0;
            dx_sum += dx;
            ++dx_n;
          }
          if (has_dy) {
            dy = intensity(x, y + 1) - i0;
            dy_sum += dy;
            ++dy_n;
          }
          if (has_dx && has_dy) {
            mag_sum += std::sqrt(dx * dx + dy * dy);
            ++mag_n;
          }
        }

      double* row = out.matrix.data() + static_cast<size_t>(gr * grid_cols + gc) * kGridPatchDims;
      for (int c = 0; c < 3; ++c) row[c] = sum[c] / count;
      row[3] = static_cast<double>(red) / count;
      row[4] = static_cast<double>(white) / count;
      row[5] = static_cast<double>(gray) / count;
      for (int c = 0; c < 3; ++c) {
        const double mean = sum[c] / count;
        const double var = std::max(0.0, sumsq[c] / count - mean * mean);
        row[6 + c] = std::sqrt(var);
      }
      row[9] = dx_n ? dx_sum / dx_n : 0.0;
      row[10] = dy_n ? dy_sum / dy_n : 0.0;
      row[11] = mag_n ? mag_sum / mag_n : 0.0;
    }
  return out;
}

TinyConvParams make_tiny_conv(int channels) {
  TinyConvParams p;
  p.kernel = Tensor({channels, 3, 5, 5});
  p.bias = Tensor({channels});
  return p;
}

ConvGeom tiny_conv_geom(int image_w, int image_h, int grid_rows, int grid_cols) {
  ConvGeom g;
  g.out_rows = grid_rows;
  g.out_cols = grid_cols;
  g.stride_y = grid_rows > 1 ? (image_h - g.kernel) / (grid_rows - 1) : 0;
  g.stride_x = grid_cols > 1 ? (image_w - g.kernel) / (grid_cols - 1) : 0;
  if (image_h < g.kernel || image_w < g.kernel || (grid_rows > 1 && g.stride_y < 1) ||
      (grid_cols > 1 && g.stride_x < 1))
    fail(ErrorKind::kDimension, "tiny_conv_geom: image " + std::to_string(image_w) + "x" + std::to_string(image_h) +
                                    " too small for a " + std::to_string(grid_rows) + "x" +
                                    std::to_string(grid_cols) + " grid");
  return g;
}

Tensor image_to_tensor(const RasterImage& img) {
  Tensor t({3, img.height, img.width});
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const uint8_t* p = img.px(x, y);
      for (int c = 0; c < 3; ++c)
        t[(c * img.height + y) * img.width + x] = p[c] / 255.0;
    }
  return t;
}

NodeId extract_tiny_conv_node(Tape& tape, const RasterImage& img, NodeId kernel, NodeId bias, int grid_rows,
                              int grid_cols) {
  ConvGeom g = tiny_conv_geom(img.width, img.height, grid_rows, grid_cols);
  NodeId image = tape.constant(image_to_tensor(img));
  return tape.relu(tape.conv2d_grid(kernel, bias, image, g));
}

SpatialFeatures extract_tiny_conv(const RasterImage& img, const TinyConvParams& params, int grid_rows,
                                  int grid_cols) {
  Tape tape;
  NodeId kernel = tape.constant(params.kernel);
  NodeId bias = tape.constant(params.bias);
  NodeId out = extract_tiny_conv_node(tape, img, kernel, bias, grid_rows, grid_cols);
  SpatialFeatures f;
  f.matrix = tape.value(out);
  f.grid_rows = grid_rows;
  f.grid_cols = grid_cols;
  f.image_w = img.width;
  f.image_h = img.height;
  return f;
}

namespace {
constexpr char kFeatMagic[8] = {'S', 'M', 'E', 'M', 'F', 'E', 'A', 'T'};

void put_u32(std::ofstream& out, uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff), static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

uint32_t take_u32(std::ifstream& in, const std::filesystem::path& path, size_t offset) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4)
    fail(ErrorKind::kFormat, path.string() + ": truncated at byte offset " + std::to_string(offset));
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) | (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}
}  // namespace

void write_feature_file(const SpatialFeatures& features, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out.write(kFeatMagic, 8);
  put_u32(out, 1);
  put_u32(out, static_cast<uint32_t>(features.locations()));
  put_u32(out, static_cast<uint32_t>(features.dims()));
  for (double v : features.matrix.flat()) {
    const float f = static_cast<float>(v);
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
  if (!out) fail(ErrorKind::kIo, "short write to " + path.string());
}

SpatialFeatures load_precomputed(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot read " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kFeatMagic, 8) != 0)
    fail(ErrorKind::kFormat, path.string() + ": bad magic at byte offset 0 (expected SMEMFEAT)");
  const uint32_t version = take_u32(in, path, 8);
  if (version != 1) fail(ErrorKind::kFormat, path.string() + ": unsupported version " + std::to_string(version));
  const uint32_t L = take_u32(in, path, 12);
  const uint32_t M = take_u32(in, path, 16);
  if (L == 0 || M == 0) fail(ErrorKind::kFormat, path.string() + ": zero dimension in header");

  SpatialFeatures f;
  f.matrix = Tensor({static_cast<int>(L), static_cast<int>(M)});
  size_t offset = 20;
  for (uint32_t i = 0; i < L * M; ++i, offset += 4) {
    const uint32_t bits = take_u32(in, path, offset);
    float v;
    std::memcpy(&v, &bits, 4);
    f.matrix[static_cast<int>(i)] = static_cast<double>(v);
  }
  // grid geometry is not stored; assume a square grid when L permits
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(L))));
  if (side * side == static_cast<int>(L)) {
    f.grid_rows = side;
    f.grid_cols = side;
  } else {
    f.grid_rows = 1;
    f.grid_cols = static_cast<int>(L);
  }
  return f;
}

}  // namespace smem
