#include "smem/viz.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "smem/error.hpp"

namespace smem {

namespace {

using nlohmann::json;

std::string zero_padded(int v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05d", v);
  return buf;
}

// Raw weights -> 0..255 bytes; a constant map renders mid-gray.
std::vector<uint8_t> scaled_bytes(const Tensor& weights) {
  double lo = weights[0], hi = weights[0];
  for (int i = 1; i < weights.numel(); ++i) {
    lo = std::min(lo, weights[i]);
    hi = std::max(hi, weights[i]);
  }
  std::vector<uint8_t> out(static_cast<size_t>(weights.numel()));
  for (int i = 0; i < weights.numel(); ++i)
    out[static_cast<size_t>(i)] =
        hi > lo ? static_cast<uint8_t>(std::lround(255.0 * (weights[i] - lo) / (hi - lo))) : 128;
  return out;
}

// Nearest-neighbor upsample of per-cell bytes to image resolution. Cells use
// the same ceil-sized geometry as the grid-patch extractor.
std::vector<uint8_t> upsample(const std::vector<uint8_t>& cells, int grid_rows, int grid_cols, int width, int height) {
  const int cell_h = (height + grid_rows - 1) / grid_rows;
  const int cell_w = (width + grid_cols - 1) / grid_cols;
  std::vector<uint8_t> out(static_cast<size_t>(width) * static_cast<size_t>(height));
  for (int y = 0; y < height; ++y) {
    const int row = std::min(grid_rows - 1, y / cell_h);
    for (int x = 0; x < width; ++x) {
      const int col = std::min(grid_cols - 1, x / cell_w);
      out[static_cast<size_t>(y) * width + x] = cells[static_cast<size_t>(row) * grid_cols + col];
    }
  }
  return out;
}

RasterImage blend_overlay(const RasterImage& img, const std::vector<uint8_t>& heat) {
  RasterImage out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const uint8_t h = heat[static_cast<size_t>(y) * img.width + x];
      uint8_t* p = out.px(x, y);
      for (int c = 0; c < 3; ++c) p[c] = static_cast<uint8_t>((static_cast<int>(p[c]) + h) / 2);
    }
  return out;
}

HopTrace trace_for(TrainedModel& model, const SynthSet& split, int sample) {
  if (model.kind != ModelKind::kSMem)
    fail(ErrorKind::kUsage, "attention export needs an smem model; the ibowimg baseline has no attention");
  if (sample < 0 || sample >= static_cast<int>(split.samples.size()))
    fail(ErrorKind::kUsage, "sample index " + std::to_string(sample) + " out of range");
  const QASample& q = split.samples[static_cast<size_t>(sample)];
  const RasterImage& img = split.images[static_cast<size_t>(q.image)];
  SpatialFeatures feats = features_for(model, img);
  EncodedQuestion enc = encode_question(q.question, model.vocab, model.cfg.question_capacity);
  ForwardOptions opts;
  return smem_predict(model.smem, enc, feats, opts);
}

}  // namespace

SpatialFeatures features_for(const TrainedModel& model, const RasterImage& img) {
  switch (model.cfg.features) {
    case FeatureSource::kGridPatch:
      return extract_grid_patch(img, model.cfg.grid_rows, model.cfg.grid_cols);
    case FeatureSource::kTinyConv:
      return extract_tiny_conv(img, model.conv, model.cfg.grid_rows, model.cfg.grid_cols);
    default:
      fail(ErrorKind::kUsage, "precomputed features cannot be recomputed from an image");
  }
}

int argmax_attention(const Tensor& weights) {
  int arg = 0;
  for (int i = 1; i < weights.numel(); ++i)
    if (weights[i] > weights[arg]) arg = i;
  return arg;
}

void export_attention_maps(TrainedModel& model, const SynthSet& split, const std::vector<int>& samples,
                           const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const int rows = model.cfg.grid_rows, cols = model.cfg.grid_cols;
  for (int s : samples) {
    HopTrace trace = trace_for(model, split, s);  // validates the index
    const QASample& q = split.samples[static_cast<size_t>(s)];
    const RasterImage& img = split.images[static_cast<size_t>(q.image)];
    const EncodedQuestion enc = encode_question(q.question, model.vocab, model.cfg.question_capacity);
    const std::vector<std::string> tokens = decode_question(enc, model.vocab);
    const std::string base = "sample_" + zero_padded(s);

    json sidecar;
    sidecar["question"] = q.question;
    sidecar["answer"] = q.answer;
    json hops = json::array();
    for (size_t h = 0; h < trace.hops.size(); ++h) {
      const Tensor& w = trace.hops[h].attention;
      const std::vector<uint8_t> cells = scaled_bytes(w);
      const std::vector<uint8_t> heat = upsample(cells, rows, cols, img.width, img.height);
      const std::string hop_tag = "_hop" + std::to_string(h + 1);
      write_pgm(heat, img.width, img.height, dir / (base + hop_tag + ".pgm"));
      write_ppm(blend_overlay(img, heat), dir / (base + hop_tag + "_overlay.ppm"));

      const int cell = argmax_attention(w);
      json jh;
      jh["argmax_cell"] = cell;
      jh["argmax_row"] = cell / cols;
      jh["argmax_col"] = cell % cols;
      // argword holds positions in the real-token list, not vocab ids
      if (h == 0) jh["argword"] = tokens[static_cast<size_t>(trace.argword[static_cast<size_t>(cell)])];
      json weights = json::array();
      for (int i = 0; i < w.numel(); ++i) weights.push_back(w[i]);
      jh["weights"] = weights;
      hops.push_back(jh);
    }
    sidecar["hops"] = hops;
    json pred = json::array();
    for (int k = 0; k < trace.prediction.numel(); ++k) pred.push_back(trace.prediction[k]);
    sidecar["prediction"] = pred;
    std::ofstream out(dir / (base + ".json"));
    if (!out) fail(ErrorKind::kIo, "cannot open " + (dir / (base + ".json")).string() + " for writing");
    out << sidecar.dump(2) << '\n';
  }
}

void export_correlation_csv(TrainedModel& model, const SynthSet& split, int sample,
                            const std::filesystem::path& path) {
  HopTrace trace = trace_for(model, split, sample);
  const QASample& q = split.samples[static_cast<size_t>(sample)];
  EncodedQuestion enc = encode_question(q.question, model.vocab, model.cfg.question_capacity);
  const std::vector<std::string> tokens = decode_question(enc, model.vocab);
  const Tensor& corr = trace.hops[0].correlation;  // real tokens x locations
  const int loc = argmax_attention(trace.hops[0].attention);

  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out << "token,correlation\n";
  char buf[64];
  for (size_t t = 0; t < tokens.size(); ++t) {
    std::snprintf(buf, sizeof(buf), "%.17g", corr.at(static_cast<int>(t), loc));
    out << tokens[t] << ',' << buf << '\n';
  }
}

}  // namespace smem
