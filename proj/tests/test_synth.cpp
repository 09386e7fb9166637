#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "doctest.h"
#include "smem/error.hpp"
#include "smem/synth.hpp"

using namespace smem;
namespace fs = std::filesystem;

namespace {

SynthSpec small_absolute(uint64_t seed) {
  SynthSpec s;
  s.task = SynthTask::kAbsolute;
  s.train_images = 12;
  s.test_images = 6;
  s.seed = seed;
  return s;
}

SynthSpec small_relative(uint64_t seed) {
  SynthSpec s;
  s.task = SynthTask::kRelative;
  s.train_images = 12;
  s.test_images = 6;
  s.seed = seed;
  return s;
}

bool same_pixels(const RasterImage& a, const RasterImage& b) {
  return a.width == b.width && a.height == b.height && a.pixels == b.pixels;
}

}  // namespace

TEST_CASE("side names round-trip and reject unknowns") {
  for (int s = 0; s < kNumSides; ++s) {
    const Side side = static_cast<Side>(s);
    CHECK(side_from_name(side_name(side)) == side);
  }
  CHECK(std::string(side_name(Side::kTop)) == "top");
  CHECK(std::string(side_name(Side::kRight)) == "right");
  try {
    side_from_name("diagonal");
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kData);
  }
}

TEST_CASE("box operations are half-open") {
  Box b{2, 3, 6, 8};
  CHECK(b.width() == 4);
  CHECK(b.height() == 5);
  CHECK(b.cx() == 4);
  CHECK(b.cy() == 5);
  CHECK(b.contains(2, 3));
  CHECK(b.contains(5, 7));
  CHECK_FALSE(b.contains(6, 7));
  CHECK_FALSE(b.contains(5, 8));
  CHECK(b.overlaps(Box{5, 7, 9, 9}));
  CHECK_FALSE(b.overlaps(Box{6, 3, 8, 8}));  // shares only the open edge
}

TEST_CASE("side zones are the edge-center ninths and disjoint") {
  CHECK(side_zone(Side::kTop, 64, 64) == Box{21, 0, 42, 21});
  CHECK(side_zone(Side::kBottom, 64, 64) == Box{21, 42, 42, 64});
  CHECK(side_zone(Side::kLeft, 64, 64) == Box{0, 21, 21, 42});
  CHECK(side_zone(Side::kRight, 64, 64) == Box{42, 21, 64, 42});
  for (int a = 0; a < kNumSides; ++a)
    for (int b = a + 1; b < kNumSides; ++b)
      CHECK_FALSE(side_zone(static_cast<Side>(a), 64, 64).overlaps(side_zone(static_cast<Side>(b), 64, 64)));
}

TEST_CASE("zone_of_point maps center, corners and outside to -1") {
  CHECK(zone_of_point(32, 5, 64, 64) == 0);   // top
  CHECK(zone_of_point(32, 60, 64, 64) == 1);  // bottom
  CHECK(zone_of_point(5, 32, 64, 64) == 2);   // left
  CHECK(zone_of_point(60, 32, 64, 64) == 3);  // right
  CHECK(zone_of_point(32, 32, 64, 64) == -1);  // center ninth
  CHECK(zone_of_point(0, 0, 64, 64) == -1);    // corner ninth
  CHECK(zone_of_point(-1, 5, 64, 64) == -1);
  CHECK(zone_of_point(64, 32, 64, 64) == -1);
}

TEST_CASE("absolute task emits four ordered questions with one yes") {
  SynthDataset d = gen_absolute(small_absolute(3));
  CHECK(d.train.images.size() == 12);
  CHECK(d.train.samples.size() == 48);
  CHECK(d.test.images.size() == 6);
  CHECK(d.test.samples.size() == 24);

  for (size_t i = 0; i < d.train.images.size(); ++i) {
    const QASample* qs = &d.train.samples[4 * i];
    CHECK(qs[0].category == "top");
    CHECK(qs[1].category == "bottom");
    CHECK(qs[2].category == "left");
    CHECK(qs[3].category == "right");
    int yes = 0;
    for (int k = 0; k < 4; ++k) {
      CHECK(qs[k].image == static_cast<int>(i));
      CHECK(qs[k].question == "is there a red square on the " + qs[k].category + "?");
      CHECK_FALSE(qs[k].object_box.has_value());
      yes += qs[k].answer == "yes" ? 1 : 0;
      // all four samples describe the same square
      CHECK(qs[k].square_box == qs[0].square_box);
    }
    CHECK(yes == 1);
  }
}

TEST_CASE("absolute squares are painted red inside their declared box") {
  SynthSpec spec = small_absolute(4);
  SynthDataset d = gen_absolute(spec);
  for (size_t i = 0; i < d.train.images.size(); ++i) {
    const RasterImage& img = d.train.images[i];
    const Box& sq = d.train.samples[4 * i].square_box;
    CHECK(sq.x0 >= 0);
    CHECK(sq.y0 >= 0);
    CHECK(sq.x1 <= spec.width);
    CHECK(sq.y1 <= spec.height);
    CHECK(sq.width() == spec.square_side);
    const uint8_t* inside = img.px(sq.cx(), sq.cy());
    CHECK(inside[0] == 255);
    CHECK(inside[1] == 0);
    CHECK(inside[2] == 0);
    // the center ninth never holds the square
    const uint8_t* center = img.px(spec.width / 2, spec.height / 2);
    CHECK(center[0] == 255);
    CHECK(center[1] == 255);
    CHECK(center[2] == 255);
  }
}

TEST_CASE("absolute labels agree with recomputed geometry") {
  SynthSpec spec = small_absolute(5);
  SynthDataset d = gen_absolute(spec);
  for (const QASample& q : d.train.samples) CHECK(answer_from_geometry(q, spec) == q.answer);
  for (const QASample& q : d.test.samples) CHECK(answer_from_geometry(q, spec) == q.answer);
  // the yes answer names the zone of the square centroid
  for (const QASample& q : d.test.samples)
    if (q.answer == "yes")
      CHECK(zone_of_point(q.square_box.cx(), q.square_box.cy(), spec.width, spec.height) ==
            static_cast<int>(side_from_name(q.category)));
}

TEST_CASE("generation is seed-deterministic and seed-sensitive") {
  SynthDataset a = gen_absolute(small_absolute(7));
  SynthDataset b = gen_absolute(small_absolute(7));
  SynthDataset c = gen_absolute(small_absolute(8));
  for (size_t i = 0; i < a.train.images.size(); ++i)
    CHECK(same_pixels(a.train.images[i], b.train.images[i]));
  CHECK(a.train.samples == b.train.samples);
  CHECK(a.test.samples == b.test.samples);
  bool any_diff = false;
  for (size_t i = 0; i < a.train.images.size(); ++i)
    any_diff = any_diff || !same_pixels(a.train.images[i], c.train.images[i]);
  CHECK(any_diff);
  // train and test come from different streams of one seed
  CHECK(a.train.samples[0].square_box != a.test.samples[0].square_box);
}

TEST_CASE("relative task places the square beside the blob with a 2px gap") {
  SynthSpec spec = small_relative(9);
  SynthDataset d = gen_relative(spec);
  CHECK(d.train.samples.size() == 48);
  for (size_t i = 0; i < d.train.images.size(); ++i) {
    const QASample* qs = &d.train.samples[4 * i];
    REQUIRE(qs[0].object_box.has_value());
    const Box obj = *qs[0].object_box;
    const Box sq = qs[0].square_box;
    CHECK_FALSE(sq.overlaps(obj));
    int yes_idx = -1;
    for (int k = 0; k < 4; ++k) {
      CHECK(qs[k].question ==
            "is there a red square on the " + qs[k].category + " of the blob?");
      if (qs[k].answer == "yes") yes_idx = k;
    }
    REQUIRE(yes_idx >= 0);
    switch (static_cast<Side>(yes_idx)) {
      case Side::kTop:
        CHECK(sq.y1 == obj.y0 - 2);
        CHECK(sq.x0 == obj.x0 + (obj.width() - sq.width()) / 2);
        break;
      case Side::kBottom:
        CHECK(sq.y0 == obj.y1 + 2);
        break;
      case Side::kLeft:
        CHECK(sq.x1 == obj.x0 - 2);
        break;
      case Side::kRight:
        CHECK(sq.x0 == obj.x1 + 2);
        CHECK(sq.y0 == obj.y0 + (obj.height() - sq.height()) / 2);
        break;
    }
    // both shapes stay in frame
    CHECK(sq.x0 >= 0);
    CHECK(sq.y0 >= 0);
    CHECK(sq.x1 <= spec.width);
    CHECK(sq.y1 <= spec.height);
  }
}

TEST_CASE("relative images hold a gray blob, a red square, and a clean gap") {
  SynthSpec spec = small_relative(10);
  SynthDataset d = gen_relative(spec);
  for (size_t i = 0; i < d.train.images.size(); ++i) {
    const RasterImage& img = d.train.images[i];
    const QASample& q = d.train.samples[4 * i];
    const Box obj = *q.object_box;
    const uint8_t* blob_center = img.px(obj.cx(), obj.cy());
    CHECK(blob_center[0] == 128);
    CHECK(blob_center[1] == 128);
    const uint8_t* square_center = img.px(q.square_box.cx(), q.square_box.cy());
    CHECK(square_center[0] == 255);
    CHECK(square_center[1] == 0);
  }
}

TEST_CASE("relative labels agree with recomputed geometry") {
  SynthSpec spec = small_relative(11);
  SynthDataset d = gen_relative(spec);
  for (const QASample& q : d.train.samples) CHECK(answer_from_geometry(q, spec) == q.answer);
  for (const QASample& q : d.test.samples) CHECK(answer_from_geometry(q, spec) == q.answer);
}

TEST_CASE("distractor blobs never touch the square or true blob") {
  SynthSpec spec = small_relative(12);
  spec.width = 96;
  spec.height = 96;
  spec.num_distractors = 3;
  SynthDataset d = gen_relative(spec);
  for (size_t i = 0; i < d.train.images.size(); ++i) {
    const RasterImage& img = d.train.images[i];
    const QASample& q = d.train.samples[4 * i];
    // every pixel of the square is still pure red: nothing was drawn over
    // it, and the gap ring means nothing abuts it either
    for (int y = q.square_box.y0; y < q.square_box.y1; ++y)
      for (int x = q.square_box.x0; x < q.square_box.x1; ++x) {
        const uint8_t* p = img.px(x, y);
        CHECK(p[0] == 255);
        CHECK(p[1] == 0);
        CHECK(p[2] == 0);
      }
    CHECK(answer_from_geometry(q, spec) == q.answer);
  }
}

TEST_CASE("infeasible geometry is rejected up front") {
  SynthSpec rel = small_relative(1);
  rel.width = 40;  // 16 + 2*(12+2) = 44 > 40
  CHECK_THROWS_AS(gen_relative(rel), Error);

  SynthSpec abs = small_absolute(1);
  abs.square_side = 22;  // zone is 21 wide on a 64px image
  try {
    gen_absolute(abs);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kUsage);
  }

  SynthSpec none = small_absolute(1);
  none.train_images = 0;
  CHECK_THROWS_AS(gen_absolute(none), Error);
}

TEST_CASE("serialize and load round-trip the full dataset") {
  fs::path dir = fs::temp_directory_path() / "smem_synth_roundtrip";
  fs::remove_all(dir);
  SynthSpec spec = small_relative(13);
  spec.train_images = 4;
  spec.test_images = 2;
  SynthDataset d = gen_relative(spec);
  serialize_dataset(d, dir);
  CHECK(fs::exists(dir / "spec.json"));
  CHECK(fs::exists(dir / "train.jsonl"));
  CHECK(fs::exists(dir / "images" / "train_00003.ppm"));

  SynthDataset back = load_dataset(dir);
  CHECK(back.spec.task == SynthTask::kRelative);
  CHECK(back.spec.width == spec.width);
  CHECK(back.spec.square_side == spec.square_side);
  CHECK(back.spec.object_noun == "blob");
  CHECK(back.spec.seed == 13);
  CHECK(back.train.samples == d.train.samples);
  CHECK(back.test.samples == d.test.samples);
  REQUIRE(back.train.images.size() == d.train.images.size());
  for (size_t i = 0; i < d.train.images.size(); ++i)
    CHECK(same_pixels(back.train.images[i], d.train.images[i]));
  fs::remove_all(dir);
}

TEST_CASE("serialization is byte deterministic") {
  fs::path d1 = fs::temp_directory_path() / "smem_synth_b1";
  fs::path d2 = fs::temp_directory_path() / "smem_synth_b2";
  fs::remove_all(d1);
  fs::remove_all(d2);
  SynthSpec spec = small_absolute(14);
  spec.train_images = 3;
  spec.test_images = 2;
  serialize_dataset(gen_absolute(spec), d1);
  serialize_dataset(gen_absolute(spec), d2);
  for (const char* rel : {"spec.json", "train.jsonl", "test.jsonl"}) {
    std::ifstream f1(d1 / rel, std::ios::binary), f2(d2 / rel, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    CHECK(!b1.empty());
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("malformed manifests are reported with line numbers") {
  fs::path dir = fs::temp_directory_path() / "smem_synth_bad";
  fs::remove_all(dir);
  SynthSpec spec = small_absolute(15);
  spec.train_images = 2;
  spec.test_images = 1;
  serialize_dataset(gen_absolute(spec), dir);

  {
    std::ofstream out(dir / "train.jsonl", std::ios::app);
    out << "{not json}\n";
  }
  try {
    load_dataset(dir);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kFormat);
    CHECK(std::string(e.what()).find(":9") != std::string::npos);  // 8 good lines, then this
  }

  // rewrite with a missing required field
  {
    std::ofstream out(dir / "train.jsonl");
    out << R"({"image":"images/train_00000.ppm","question":"q","answer":"yes","category":"top"})" << "\n";
  }
  try {
    load_dataset(dir);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("missing field square_box") != std::string::npos);
  }

  fs::remove_all(dir);
  CHECK_THROWS_AS(load_dataset(dir), Error);
}

TEST_CASE("train and test placements rarely collide at small scale") {
  SynthSpec spec = small_absolute(16);
  spec.train_images = 30;
  spec.test_images = 15;
  SynthDataset d = gen_absolute(spec);
  std::set<std::tuple<int, int, int>> train_placements;
  for (size_t i = 0; i < d.train.images.size(); ++i) {
    const Box& b = d.train.samples[4 * i].square_box;
    train_placements.insert({b.x0, b.y0, 0});
  }
  int shared = 0;
  for (size_t i = 0; i < d.test.images.size(); ++i) {
    const Box& b = d.test.samples[4 * i].square_box;
    shared += train_placements.count({b.x0, b.y0, 0}) ? 1 : 0;
  }
  // deterministic by seed; the placement space (400 cells) dwarfs the draw
  CHECK(shared <= 3);
}
