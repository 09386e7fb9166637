#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "smem/error.hpp"
#include "smem/image.hpp"
#include "smem/viz.hpp"

using namespace smem;
namespace fs = std::filesystem;

namespace {

SynthDataset viz_data(uint64_t seed) {
  SynthSpec spec;
  spec.task = SynthTask::kAbsolute;
  spec.train_images = 6;
  spec.test_images = 3;
  spec.seed = seed;
  return gen_absolute(spec);
}

TrainedModel viz_model(const SynthDataset& data) {
  TrainConfig cfg;
  cfg.model = "smem-2hop";
  cfg.embed_dim = 8;
  cfg.question_capacity = 8;
  cfg.batch_size = 12;
  cfg.epochs = 1;
  cfg.learning_rate = 0.05;
  cfg.seed = 2;
  return train_model(cfg, data).model;
}

}  // namespace

TEST_CASE("argmax_attention prefers the lowest index on ties") {
  CHECK(argmax_attention(Tensor({4}, {0.1, 0.6, 0.2, 0.1})) == 1);
  CHECK(argmax_attention(Tensor({3}, {0.5, 0.5, 0.5})) == 0);
  CHECK(argmax_attention(Tensor({1}, {1.0})) == 0);
}

TEST_CASE("attention export writes heatmaps, overlays, and a sidecar per hop") {
  fs::path dir = fs::temp_directory_path() / "smem_viz_maps";
  fs::remove_all(dir);
  SynthDataset data = viz_data(21);
  TrainedModel model = viz_model(data);
  export_attention_maps(model, data.test, {0, 5}, dir);

  for (int s : {0, 5}) {
    const std::string base = "sample_0000" + std::to_string(s);
    for (int hop = 1; hop <= 2; ++hop) {
      const fs::path pgm = dir / (base + "_hop" + std::to_string(hop) + ".pgm");
      const fs::path ppm = dir / (base + "_hop" + std::to_string(hop) + "_overlay.ppm");
      REQUIRE(fs::exists(pgm));
      REQUIRE(fs::exists(ppm));
      // heatmap and overlay are image-sized
      RasterImage overlay = read_ppm(ppm);
      CHECK(overlay.width == 64);
      CHECK(overlay.height == 64);
      CHECK(fs::file_size(pgm) == 13u + 64u * 64u);  // "P5\n64 64\n255\n" header + payload
    }

    std::ifstream in(dir / (base + ".json"));
    REQUIRE(in.good());
    nlohmann::json sidecar = nlohmann::json::parse(in);
    CHECK(sidecar["question"].is_string());
    CHECK(sidecar["answer"].is_string());
    REQUIRE(sidecar["hops"].size() == 2);
    const auto& hop1 = sidecar["hops"][0];
    CHECK(hop1.contains("argword"));
    CHECK(hop1["argmax_cell"].is_number_integer());
    const int cell = hop1["argmax_cell"].get<int>();
    CHECK(hop1["argmax_row"].get<int>() == cell / 4);
    CHECK(hop1["argmax_col"].get<int>() == cell % 4);
    CHECK(hop1["weights"].size() == 16);
    // the argword is an actual question token
    const std::string argword = hop1["argword"].get<std::string>();
    const std::string question = sidecar["question"].get<std::string>();
    CHECK(question.find(argword) != std::string::npos);
    // the second hop has no word-guided attention
    CHECK_FALSE(sidecar["hops"][1].contains("argword"));
    // weights in the sidecar are a probability distribution
    double sum = 0.0;
    for (const auto& w : hop1["weights"]) sum += w.get<double>();
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(sidecar["prediction"].size() == 2);
  }
  fs::remove_all(dir);
}

TEST_CASE("a constant attention map renders mid-gray") {
  fs::path dir = fs::temp_directory_path() / "smem_viz_flat";
  fs::remove_all(dir);
  SynthDataset data = viz_data(22);
  TrainedModel model = viz_model(data);
  // zero the attention pathway: correlations vanish and softmax is uniform
  for (double& x : model.smem.embedding.flat()) x = 0.0;
  export_attention_maps(model, data.test, {0}, dir);
  std::ifstream in(dir / "sample_00000_hop1.pgm", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  REQUIRE(!bytes.empty());
  // every payload byte after the header is 128
  const size_t payload = bytes.size() - 64 * 64;
  for (size_t i = payload; i < bytes.size(); ++i)
    CHECK(static_cast<uint8_t>(bytes[i]) == 128);
  fs::remove_all(dir);
}

TEST_CASE("a peaked attention map has a bright argmax cell") {
  fs::path dir = fs::temp_directory_path() / "smem_viz_peak";
  fs::remove_all(dir);
  SynthDataset data = viz_data(23);
  TrainedModel model = viz_model(data);
  export_attention_maps(model, data.test, {2}, dir);
  std::ifstream in(dir / "sample_00002.json");
  nlohmann::json sidecar = nlohmann::json::parse(in);
  const auto& hop1 = sidecar["hops"][0];
  const int cell = hop1["argmax_cell"].get<int>();

  std::ifstream pgm(dir / "sample_00002_hop1.pgm", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(pgm)), std::istreambuf_iterator<char>());
  const size_t payload = bytes.size() - 64 * 64;
  // center pixel of the argmax cell equals 255 under min-max scaling
  // (as long as the map is not constant, which the sidecar weights confirm)
  double lo = 1e9, hi = -1e9;
  for (const auto& w : hop1["weights"]) {
    lo = std::min(lo, w.get<double>());
    hi = std::max(hi, w.get<double>());
  }
  REQUIRE(hi > lo);
  const int row = cell / 4, col = cell % 4;
  const int y = row * 16 + 8, x = col * 16 + 8;
  CHECK(static_cast<uint8_t>(bytes[payload + static_cast<size_t>(y) * 64 + x]) == 255);
  fs::remove_all(dir);
}

TEST_CASE("correlation csv lists every real token with its score") {
  fs::path dir = fs::temp_directory_path() / "smem_viz_csv";
  fs::remove_all(dir);
  fs::create_directories(dir);
  SynthDataset data = viz_data(24);
  TrainedModel model = viz_model(data);
  const fs::path csv = dir / "corr.csv";
  export_correlation_csv(model, data.test, 1, csv);

  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "token,correlation");
  std::vector<std::string> tokens;
  std::vector<double> scores;
  std::string line;
  while (std::getline(in, line)) {
    const size_t comma = line.rfind(',');
    REQUIRE(comma != std::string::npos);
    tokens.push_back(line.substr(0, comma));
    scores.push_back(std::stod(line.substr(comma + 1)));
  }
  // "is there a red square on the bottom?" has eight in-vocabulary tokens
  EncodedQuestion enc = encode_question(data.test.samples[1].question, model.vocab, 8);
  CHECK(tokens.size() == static_cast<size_t>(enc.real_len()));
  CHECK(tokens == decode_question(enc, model.vocab));

  // scores match a recomputation of the hop-1 correlation at the argmax cell
  SpatialFeatures feats = features_for(model, data.test.images[data.test.samples[1].image]);
  HopTrace trace = smem_predict(model.smem, enc, feats, {});
  const int loc = argmax_attention(trace.hops[0].attention);
  for (size_t t = 0; t < scores.size(); ++t)
    CHECK(scores[t] == trace.hops[0].correlation.at(static_cast<int>(t), loc));
  fs::remove_all(dir);
}

TEST_CASE("viz refuses baselines, bad indices, and precomputed features") {
  fs::path dir = fs::temp_directory_path() / "smem_viz_errors";
  fs::remove_all(dir);
  SynthDataset data = viz_data(25);
  TrainedModel model = viz_model(data);
  CHECK_THROWS_AS(export_attention_maps(model, data.test, {999}, dir), Error);

  TrainedModel ibow = model;
  ibow.kind = ModelKind::kIBow;
  try {
    export_attention_maps(ibow, data.test, {0}, dir);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kUsage);
  }

  TrainedModel pre = model;
  pre.cfg.features = FeatureSource::kPrecomputed;
  CHECK_THROWS_AS(features_for(pre, data.test.images[0]), Error);
  fs::remove_all(dir);
}
