#pragma once

#include <filesystem>

#include "smem/image.hpp"
#include "smem/tape.hpp"
#include "smem/tensor.hpp"

namespace smem {

// Pixel rectangle of one grid cell, half-open.
struct CellRect {
  int x0, y0, x1, y1;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
};

// The spatial memory: one M-dimensional feature row per grid location
// (row-major over a rows x cols grid). image_w/image_h are zero when the
// source geometry is unknown (precomputed files).
struct SpatialFeatures {
  Tensor matrix;  // L x M
  int grid_rows = 0;
  int grid_cols = 0;
  int image_w = 0;
  int image_h = 0;

  int locations() const { return matrix.rows(); }
  int dims() const { return matrix.cols(); }
  // Rectangle of cell i over an image of the given size.
  CellRect cell_rect(int location, int width, int height) const;
};

// Number of statistics produced per cell by the grid-patch extractor.
constexpr int kGridPatchDims = 12;

// Analytic per-cell statistics over a g_r x g_c grid. Channels are scaled
// to [0,1]; thresholds below are on the raw 8-bit values. The 12 columns:
//   0-2   mean R, G, B
//   3     fraction of red pixels        (R>200, G<80, B<80)
//   4     fraction of white pixels      (R,G,B all >230)
//   5     fraction of gray-object pixels (max-min channel <30, mean in [60,200])
//   6-8   standard deviation of R, G, B
//   9     mean horizontal forward-difference of intensity within the cell
//   10    mean vertical forward-difference of intensity within the cell
//   11    mean gradient magnitude sqrt(dx^2+dy^2) within the cell
// Images that do not divide evenly are padded by edge replication.
SpatialFeatures extract_grid_patch(const RasterImage& img, int grid_rows, int grid_cols);

// Trainable one-layer extractor: 5x5 kernels, stride chosen to land on the
// grid, ReLU. Feature dimension equals the channel count.
struct TinyConvParams {
  Tensor kernel;  // [channels, 3, 5, 5]
  Tensor bias;    // [channels]
  int channels() const { return kernel.extent(0); }
};

TinyConvParams make_tiny_conv(int channels);
// Stride so that out_rows/out_cols 5x5 windows fit; dimension error if the
// image is too small for the requested grid.
ConvGeom tiny_conv_geom(int image_w, int image_h, int grid_rows, int grid_cols);
// Image as a [3,H,W] tensor scaled to [0,1].
Tensor image_to_tensor(const RasterImage& img);
// In-graph extraction; gradients flow to the conv parameters.
NodeId extract_tiny_conv_node(Tape& tape, const RasterImage& img, NodeId kernel, NodeId bias, int grid_rows,
                              int grid_cols);
// Convenience forward-only path.
SpatialFeatures extract_tiny_conv(const RasterImage& img, const TinyConvParams& params, int grid_rows, int grid_cols);

// Precomputed-feature file: magic "SMEMFEAT", u32 version=1, u32 L, u32 M,
// then L*M little-endian 32-bit floats. One file per image.
void write_feature_file(const SpatialFeatures& features, const std::filesystem::path& path);
SpatialFeatures load_precomputed(const std::filesystem::path& path);

}  // namespace smem
