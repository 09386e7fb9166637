#include "smem/synth.hpp"

#include <cstdio>
#include <fstream>
#include <unordered_map>

#include "json.hpp"
#include "smem/error.hpp"

namespace smem {

namespace {

using nlohmann::json;

constexpr int kGap = 2;  // pixels between square and blob bounding box

std::string zero_padded(int v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05d", v);
  return buf;
}

void check_absolute_spec(const SynthSpec& spec) {
  for (int s = 0; s < kNumSides; ++s) {
    const Box zone = side_zone(static_cast<Side>(s), spec.width, spec.height);
    if (spec.square_side > zone.width() || spec.square_side > zone.height())
      fail(ErrorKind::kUsage, std::string("square side ") + std::to_string(spec.square_side) + " does not fit the " +
                                  side_name(static_cast<Side>(s)) + " zone (" + std::to_string(zone.width()) + "x" +
                                  std::to_string(zone.height()) + ")");
  }
  if (spec.train_images < 1 || spec.test_images < 1) fail(ErrorKind::kUsage, "image counts must be positive");
}

Box square_beside(const Box& obj, Side side, int s) {
  switch (side) {
    case Side::kTop: {
      const int x0 = obj.x0 + (obj.width() - s) / 2;
      return Box{x0, obj.y0 - kGap - s, x0 + s, obj.y0 - kGap};
    }
    case Side::kBottom: {
      const int x0 = obj.x0 + (obj.width() - s) / 2;
      return Box{x0, obj.y1 + kGap, x0 + s, obj.y1 + kGap + s};
    }
    case Side::kLeft: {
      const int y0 = obj.y0 + (obj.height() - s) / 2;
      return Box{obj.x0 - kGap - s, y0, obj.x0 - kGap, y0 + s};
    }
    default: {
      const int y0 = obj.y0 + (obj.height() - s) / 2;
      return Box{obj.x1 + kGap, y0, obj.x1 + kGap + s, y0 + s};
    }
  }
}

void draw_blob(RasterImage& img, const Box& box) {
  img.fill_ellipse(box.cx(), box.cy(), (box.width() - 1) / 2, (box.height() - 1) / 2, 128, 128, 128);
}

void push_questions(SynthSet& set, int image, const std::string& suffix, Side true_side, const Box& square,
                    const std::optional<Box>& object) {
  for (int s = 0; s < kNumSides; ++s) {
    const Side side = static_cast<Side>(s);
    QASample q;
    q.image = image;
    q.question = std::string("is there a red square on the ") + side_name(side) + suffix + "?";
    q.answer = side == true_side ? "yes" : "no";
    q.category = side_name(side);
    q.square_box = square;
    q.object_box = object;
    set.samples.push_back(std::move(q));
  }
}

SynthSet absolute_split(const SynthSpec& spec, int count, Rng& rng) {
  SynthSet set;
  for (int i = 0; i < count; ++i) {
    const Side side = static_cast<Side>(rng.next_int(kNumSides));
    const Box zone = side_zone(side, spec.width, spec.height);
    const int x0 = zone.x0 + rng.next_int(zone.width() - spec.square_side + 1);
    const int y0 = zone.y0 + rng.next_int(zone.height() - spec.square_side + 1);
    const Box square{x0, y0, x0 + spec.square_side, y0 + spec.square_side};

    RasterImage img = RasterImage::filled(spec.width, spec.height, 255, 255, 255);
    img.fill_rect(square.x0, square.y0, square.width(), square.height(), 255, 0, 0);
    set.images.push_back(std::move(img));
    push_questions(set, i, "", side, square, std::nullopt);
  }
  return set;
}

SynthSet relative_split(const SynthSpec& spec, int count, Rng& rng) {
  const int margin = spec.square_side + kGap;
  const int range_x = spec.width - spec.object_w - 2 * margin + 1;
  const int range_y = spec.height - spec.object_h - 2 * margin + 1;
  if (range_x < 1 || range_y < 1)
    fail(ErrorKind::kUsage, "relative task geometry infeasible: object " + std::to_string(spec.object_w) + "x" +
                                std::to_string(spec.object_h) + " plus square margins exceeds " +
                                std::to_string(spec.width) + "x" + std::to_string(spec.height));

  SynthSet set;
  for (int i = 0; i < count; ++i) {
    const int ox0 = margin + rng.next_int(range_x);
    const int oy0 = margin + rng.next_int(range_y);
    const Box obj{ox0, oy0, ox0 + spec.object_w, oy0 + spec.object_h};
    const Side rel = static_cast<Side>(rng.next_int(kNumSides));
    const Box square = square_beside(obj, rel, spec.square_side);

    RasterImage img = RasterImage::filled(spec.width, spec.height, 255, 255, 255);
    draw_blob(img, obj);
    img.fill_rect(square.x0, square.y0, square.width(), square.height(), 255, 0, 0);

    std::vector<Box> placed{obj, square};
    for (int d = 0; d < spec.num_distractors; ++d) {
      bool ok = false;
      for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
        const int dx0 = 1 + rng.next_int(spec.width - spec.object_w - 1);
        const int dy0 = 1 + rng.next_int(spec.height - spec.object_h - 1);
        const Box cand{dx0, dy0, dx0 + spec.object_w, dy0 + spec.object_h};
        const Box inflated{cand.x0 - kGap, cand.y0 - kGap, cand.x1 + kGap, cand.y1 + kGap};
        ok = true;
        for (const Box& b : placed) ok = ok && !inflated.overlaps(b);
        if (ok) {
          draw_blob(img, cand);
          placed.push_back(cand);
        }
      }
      if (!ok) fail(ErrorKind::kData, "could not place distractor " + std::to_string(d) + " after 100 attempts");
    }

    set.images.push_back(std::move(img));
    push_questions(set, i, " of the " + spec.object_noun, rel, square, obj);
  }
  return set;
}

json box_to_json(const Box& b) { return json::array({b.x0, b.y0, b.x1, b.y1}); }

Box box_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4) fail(ErrorKind::kFormat, where + ": box must be a 4-element array");
  return Box{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

void write_split(const SynthSet& set, const std::string& name, const std::filesystem::path& dir) {
  for (size_t i = 0; i < set.images.size(); ++i)
    write_ppm(set.images[i], dir / "images" / (name + "_" + zero_padded(static_cast<int>(i)) + ".ppm"));
  std::ofstream out(dir / (name + ".jsonl"));
  if (!out) fail(ErrorKind::kIo, "cannot open " + (dir / (name + ".jsonl")).string() + " for writing");
  for (const QASample& q : set.samples) {
    json j;
    j["image"] = "images/" + name + "_" + zero_padded(q.image) + ".ppm";
    j["question"] = q.question;
    j["answer"] = q.answer;
    j["category"] = q.category;
    j["square_box"] = box_to_json(q.square_box);
    if (q.object_box) j["object_box"] = box_to_json(*q.object_box);
    out << j.dump() << '\n';
  }
}

SynthSet read_split(const std::string& name, const std::filesystem::path& dir) {
  const std::filesystem::path manifest = dir / (name + ".jsonl");
  std::ifstream in(manifest);
  if (!in) fail(ErrorKind::kIo, "cannot open " + manifest.string());
  SynthSet set;
  std::unordered_map<std::string, int> image_index;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::kFormat, manifest.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const std::string where = manifest.string() + ":" + std::to_string(line_no);
    for (const char* key : {"image", "question", "answer", "category", "square_box"})
      if (!j.contains(key)) fail(ErrorKind::kFormat, where + ": missing field " + key);
    QASample q;
    const std::string rel_path = j["image"].get<std::string>();
    auto it = image_index.find(rel_path);
    if (it == image_index.end()) {
      it = image_index.emplace(rel_path, static_cast<int>(set.images.size())).first;
      set.images.push_back(read_ppm(dir / rel_path));
    }
    q.image = it->second;
    q.question = j["question"].get<std::string>();
    q.answer = j["answer"].get<std::string>();
    q.category = j["category"].get<std::string>();
    q.square_box = box_from_json(j["square_box"], where);
    if (j.contains("object_box")) q.object_box = box_from_json(j["object_box"], where);
    set.samples.push_back(std::move(q));
  }
  return set;
}

}  // namespace

const char* side_name(Side side) {
  switch (side) {
    case Side::kTop:
      return "top";
    case Side::kBottom:
      return "bottom";
    case Side::kLeft:
      return "left";
    default:
      return "right";
  }
}

Side side_from_name(const std::string& name) {
  for (int s = 0; s < kNumSides; ++s)
    if (name == side_name(static_cast<Side>(s))) return static_cast<Side>(s);
  fail(ErrorKind::kData, "unknown side name: " + name);
}

Box side_zone(Side side, int width, int height) {
  const int c1 = width / 3, c2 = 2 * width / 3;
  const int r1 = height / 3, r2 = 2 * height / 3;
  switch (side) {
    case Side::kTop:
      return Box{c1, 0, c2, r1};
    case Side::kBottom:
      return Box{c1, r2, c2, height};
    case Side::kLeft:
      return Box{0, r1, c1, r2};
    default:
      return Box{c2, r1, width, r2};
  }
}

int zone_of_point(int x, int y, int width, int height) {
  if (x < 0 || x >= width || y < 0 || y >= height) return -1;
  for (int s = 0; s < kNumSides; ++s)
    if (side_zone(static_cast<Side>(s), width, height).contains(x, y)) return s;
  return -1;
}

SynthDataset gen_absolute(const SynthSpec& spec) {
  check_absolute_spec(spec);
  SynthDataset out;
  out.spec = spec;
  Rng train_rng(spec.seed, rng_stream::kTrainData);
  Rng test_rng(spec.seed, rng_stream::kTestData);
  out.train = absolute_split(spec, spec.train_images, train_rng);
  out.test = absolute_split(spec, spec.test_images, test_rng);
  return out;
}

SynthDataset gen_relative(const SynthSpec& spec) {
  if (spec.train_images < 1 || spec.test_images < 1) fail(ErrorKind::kUsage, "image counts must be positive");
  SynthDataset out;
  out.spec = spec;
  Rng train_rng(spec.seed, rng_stream::kTrainData);
  Rng test_rng(spec.seed, rng_stream::kTestData);
  out.train = relative_split(spec, spec.train_images, train_rng);
  out.test = relative_split(spec, spec.test_images, test_rng);
  return out;
}

SynthDataset generate(const SynthSpec& spec) {
  return spec.task == SynthTask::kAbsolute ? gen_absolute(spec) : gen_relative(spec);
}

std::string answer_from_geometry(const QASample& sample, const SynthSpec& spec) {
  const Side asked = side_from_name(sample.category);
  if (sample.object_box) {
    const Box expected = square_beside(*sample.object_box, asked, spec.square_side);
    return expected == sample.square_box ? "yes" : "no";
  }
  const int zone = zone_of_point(sample.square_box.cx(), sample.square_box.cy(), spec.width, spec.height);
  return zone == static_cast<int>(asked) ? "yes" : "no";
}

void serialize_dataset(const SynthDataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  json meta;
  meta["task"] = dataset.spec.task == SynthTask::kAbsolute ? "absolute" : "relative";
  meta["width"] = dataset.spec.width;
  meta["height"] = dataset.spec.height;
  meta["square_side"] = dataset.spec.square_side;
  meta["object_w"] = dataset.spec.object_w;
  meta["object_h"] = dataset.spec.object_h;
  meta["object_noun"] = dataset.spec.object_noun;
  meta["num_distractors"] = dataset.spec.num_distractors;
  meta["train_images"] = dataset.spec.train_images;
  meta["test_images"] = dataset.spec.test_images;
  meta["seed"] = dataset.spec.seed;
  std::ofstream spec_out(dir / "spec.json");
  if (!spec_out) fail(ErrorKind::kIo, "cannot open " + (dir / "spec.json").string() + " for writing");
  spec_out << meta.dump(2) << '\n';
  write_split(dataset.train, "train", dir);
  write_split(dataset.test, "test", dir);
}

SynthDataset load_dataset(const std::filesystem::path& dir) {
  const std::filesystem::path spec_path = dir / "spec.json";
  std::ifstream in(spec_path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + spec_path.string());
  json meta;
  try {
    in >> meta;
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, spec_path.string() + ": " + e.what());
  }
  SynthDataset out;
  const std::string task = meta.value("task", "absolute");
  if (task != "absolute" && task != "relative") fail(ErrorKind::kFormat, spec_path.string() + ": unknown task " + task);
  out.spec.task = task == "absolute" ? SynthTask::kAbsolute : SynthTask::kRelative;
  out.spec.width = meta.value("width", 64);
  out.spec.height = meta.value("height", 64);
  out.spec.square_side = meta.value("square_side", 12);
  out.spec.object_w = meta.value("object_w", 16);
  out.spec.object_h = meta.value("object_h", 12);
  out.spec.object_noun = meta.value("object_noun", std::string("blob"));
  out.spec.num_distractors = meta.value("num_distractors", 0);
  out.spec.train_images = meta.value("train_images", 0);
  out.spec.test_images = meta.value("test_images", 0);
  out.spec.seed = meta.value("seed", uint64_t{0});
  out.train = read_split("train", dir);
  out.test = read_split("test", dir);
  return out;
}

}  // namespace smem
