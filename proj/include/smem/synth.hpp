#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "smem/image.hpp"
#include "smem/rng.hpp"

namespace smem {

enum class Side { kTop = 0, kBottom = 1, kLeft = 2, kRight = 3 };
constexpr int kNumSides = 4;

const char* side_name(Side side);
Side side_from_name(const std::string& name);  // data error on unknown name

// Half-open pixel rectangle [x0,x1) x [y0,y1).
struct Box {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  int cx() const { return (x0 + x1) / 2; }
  int cy() const { return (y0 + y1) / 2; }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  bool overlaps(const Box& o) const { return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1; }
  bool operator==(const Box& o) const = default;
};

// The four disjoint placement zones: edge-center cells of the 3x3 partition
// (corners and center are unused, so exactly one position word is true).
Box side_zone(Side side, int width, int height);
// Which zone a pixel falls in; -1 when it lies in the center, a corner, or
// outside the image.
int zone_of_point(int x, int y, int width, int height);

enum class SynthTask { kAbsolute = 0, kRelative = 1 };

struct SynthSpec {
  SynthTask task = SynthTask::kAbsolute;
  int width = 64;
  int height = 64;
  int square_side = 12;
  int object_w = 16;  // relative task: blob bounding box
  int object_h = 12;
  std::string object_noun = "blob";
  int num_distractors = 0;
  int train_images = 2000;
  int test_images = 500;
  uint64_t seed = 0;
};

struct QASample {
  int image = 0;  // index into the owning split's image list
  std::string question;
  std::string answer;    // "yes" | "no"
  std::string category;  // position word of the question
  Box square_box;
  std::optional<Box> object_box;

  bool operator==(const QASample& o) const = default;
};

struct SynthSet {
  std::vector<RasterImage> images;
  std::vector<QASample> samples;  // 4 per image, side order top/bottom/left/right
};

struct SynthDataset {
  SynthSpec spec;
  SynthSet train;
  SynthSet test;
};

// Red square on white background, placed uniformly inside one random zone;
// four yes/no position questions per image. Train and test draw from
// separate rng streams of the same seed.
SynthDataset gen_absolute(const SynthSpec& spec);

// Gray blob (ellipse) placed uniformly with margins, red square abutting one
// side of its bounding box with a 2px gap, centered on that side; questions
// ask for the square's position relative to the blob.
SynthDataset gen_relative(const SynthSpec& spec);

SynthDataset generate(const SynthSpec& spec);  // dispatch on spec.task

// Recompute a sample's answer from its stored geometry (independent of the
// generator's bookkeeping); used to cross-check label soundness.
std::string answer_from_geometry(const QASample& sample, const SynthSpec& spec);

// dir/spec.json, dir/{train,test}.jsonl, dir/images/{train,test}_NNNNN.ppm.
// Deterministic bytes for a given dataset.
void serialize_dataset(const SynthDataset& dataset, const std::filesystem::path& dir);
SynthDataset load_dataset(const std::filesystem::path& dir);

}  // namespace smem
