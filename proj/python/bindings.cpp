#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <filesystem>
#include <string>
#include <vector>

#include "smem/error.hpp"
#include "smem/synth.hpp"
#include "smem/train.hpp"
#include "smem/viz.hpp"

namespace py = pybind11;
using namespace smem;

namespace {

SynthSpec spec_from_args(const std::string& task, uint64_t seed, int train_images, int test_images, int width,
                         int height, int square_side, int distractors) {
  SynthSpec spec;
  if (task == "absolute")
    spec.task = SynthTask::kAbsolute;
  else if (task == "relative")
    spec.task = SynthTask::kRelative;
  else
    fail(ErrorKind::kUsage, "task must be \"absolute\" or \"relative\", got \"" + task + "\"");
  spec.seed = seed;
  spec.train_images = train_images;
  spec.test_images = test_images;
  spec.width = width;
  spec.height = height;
  spec.square_side = square_side;
  spec.num_distractors = distractors;
  return spec;
}

FeatureSource source_from_name(const std::string& name) {
  if (name == "grid" || name == "grid-patch") return FeatureSource::kGridPatch;
  if (name == "conv" || name == "tiny-conv") return FeatureSource::kTinyConv;
  if (name == "precomputed") return FeatureSource::kPrecomputed;
  fail(ErrorKind::kUsage, "features must be \"grid\", \"conv\" or \"precomputed\", got \"" + name + "\"");
}

py::dict report_dict(const EvalReport& report) {
  py::dict out;
  out["accuracy"] = report.accuracy;
  py::dict per_cat;
  for (const auto& [cat, acc] : report.per_category) per_cat[py::str(cat)] = acc;
  out["per_category"] = per_cat;
  out["num_samples"] = static_cast<int>(report.samples.size());
  return out;
}

// Loads a checkpoint once and answers questions about single images.
class Predictor {
 public:
  Predictor(const std::filesystem::path& checkpoint, const std::filesystem::path& vocab)
      : model_(load_trained(checkpoint, vocab)) {}

  std::vector<std::string> classes() const { return model_.vocab.answers(); }
  std::string model_kind() const { return model_kind_name(model_.kind); }

  py::dict predict(const std::filesystem::path& image_path, const std::string& question) {
    if (model_.kind != ModelKind::kSMem)
      fail(ErrorKind::kUsage, "predict requires an smem checkpoint; ibowimg has no attention trace");
    RasterImage img = read_ppm(image_path);
    SpatialFeatures feats = features_for(model_, img);
    EncodedQuestion enc = encode_question(question, model_.vocab, model_.cfg.question_capacity);
    HopTrace trace = smem_predict(model_.smem, enc, feats, {});

    int arg = 0;
    for (int k = 1; k < trace.prediction.numel(); ++k)
      if (trace.prediction[k] > trace.prediction[arg]) arg = k;
    py::dict out;
    out["answer"] = model_.vocab.answer(arg);
    py::dict probs;
    for (int k = 0; k < trace.prediction.numel(); ++k)
      probs[py::str(model_.vocab.answer(k))] = trace.prediction[k];
    out["probs"] = probs;
    py::list hops;
    for (const auto& hop : trace.hops) {
      py::dict jh;
      std::vector<double> weights(hop.attention.flat().begin(), hop.attention.flat().end());
      jh["attention"] = weights;
      jh["argmax_cell"] = argmax_attention(hop.attention);
      hops.append(jh);
    }
    out["hops"] = hops;
    return out;
  }

 private:
  TrainedModel model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Word-guided spatial attention VQA: dataset synthesis, training, and inference";

  py::register_exception<Error>(m, "SmemError");

  m.def("build_id", []() { return std::string(build_id()); }, "Version stamp of the compiled core");

  m.def(
      "generate_dataset",
      [](const std::filesystem::path& out_dir, const std::string& task, uint64_t seed, int train_images,
         int test_images, int width, int height, int square_side, int distractors) {
        serialize_dataset(
            generate(spec_from_args(task, seed, train_images, test_images, width, height, square_side, distractors)),
            out_dir);
      },
      py::arg("out_dir"), py::arg("task") = "absolute", py::arg("seed") = 0, py::arg("train_images") = 2000,
      py::arg("test_images") = 500, py::arg("width") = 64, py::arg("height") = 64, py::arg("square_side") = 12,
      py::arg("distractors") = 0,
      "Write a synthetic spatial-reasoning dataset (images, manifests, spec) to out_dir");

  m.def(
      "train",
      [](const std::filesystem::path& data_dir, const std::filesystem::path& out_dir, const std::string& model,
         const std::string& features, int grid_rows, int grid_cols, int embed_dim, int question_capacity,
         int batch_size, int epochs, double learning_rate, double momentum, int halve_every, double weight_decay,
         double dropout, uint64_t seed) {
        TrainConfig cfg;
        cfg.model = model;
        cfg.features = source_from_name(features);
        cfg.grid_rows = grid_rows;
        cfg.grid_cols = grid_cols;
        cfg.embed_dim = embed_dim;
        cfg.question_capacity = question_capacity;
        cfg.batch_size = batch_size;
        cfg.epochs = epochs;
        cfg.learning_rate = learning_rate;
        cfg.momentum = momentum;
        cfg.halve_every = halve_every;
        cfg.weight_decay = weight_decay;
        cfg.dropout = dropout;
        cfg.seed = seed;
        TrainOutcome out = train_and_save(cfg, load_dataset(data_dir), out_dir);
        py::dict result;
        result["best_epoch"] = out.best_epoch;
        result["final_test_accuracy"] = out.history.empty() ? 0.0 : out.history.back().test_accuracy;
        py::list history;
        for (const EpochMetrics& e : out.history) {
          py::dict je;
          je["epoch"] = e.epoch;
          je["lr"] = e.lr;
          je["train_loss"] = e.train_loss;
          je["test_accuracy"] = e.test_accuracy;
          history.append(je);
        }
        result["history"] = history;
        return result;
      },
      py::arg("data_dir"), py::arg("out_dir"), py::arg("model") = "smem-1hop", py::arg("features") = "grid-patch",
      py::arg("grid_rows") = 4, py::arg("grid_cols") = 4, py::arg("embed_dim") = 64,
      py::arg("question_capacity") = 12, py::arg("batch_size") = 50, py::arg("epochs") = 50,
      py::arg("learning_rate") = 0.01, py::arg("momentum") = 0.9, py::arg("halve_every") = 6,
      py::arg("weight_decay") = 0.0, py::arg("dropout") = 0.0, py::arg("seed") = 0,
      "Train a model on a generated dataset and write checkpoints + manifest to out_dir");

  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& vocab,
         const std::filesystem::path& data_dir, const std::string& split) {
        SynthDataset data = load_dataset(data_dir);
        TrainedModel model = load_trained(checkpoint, vocab);
        Prepared prep = prepare(data, model.cfg);
        if (prep.vocab.hash() != model.vocab.hash())
          fail(ErrorKind::kUsage, "dataset vocabulary does not match the checkpoint vocabulary");
        return report_dict(evaluate(model, split == "train" ? prep.train : prep.test));
      },
      py::arg("checkpoint"), py::arg("vocab"), py::arg("data_dir"), py::arg("split") = "test",
      "Accuracy and per-category accuracy of a saved checkpoint on a dataset split");

  m.def(
      "position_heuristic",
      [](const std::filesystem::path& data_dir) { return report_dict(position_heuristic_baseline(load_dataset(data_dir))); },
      py::arg("data_dir"), "Majority-vote position baseline fitted on train and scored on test");

  m.def(
      "extract_grid_features",
      [](const std::filesystem::path& image_path, int grid_rows, int grid_cols) {
        SpatialFeatures f = extract_grid_patch(read_ppm(image_path), grid_rows, grid_cols);
        std::vector<std::vector<double>> rows;
        for (int l = 0; l < f.locations(); ++l)
          rows.emplace_back(f.matrix.data() + static_cast<size_t>(l) * f.dims(),
                            f.matrix.data() + static_cast<size_t>(l + 1) * f.dims());
        return rows;
      },
      py::arg("image_path"), py::arg("grid_rows") = 4, py::arg("grid_cols") = 4,
      "Per-cell statistics matrix (locations x 12) of a PPM image");

  m.def("consensus", &vqa_consensus, py::arg("prediction"), py::arg("human_answers"),
        "min(matches/3, 1) agreement of a prediction with a list of annotator answers");

  py::class_<Predictor>(m, "Predictor", "Loads a trained smem checkpoint and answers questions about images")
      .def(py::init<const std::filesystem::path&, const std::filesystem::path&>(), py::arg("checkpoint"),
           py::arg("vocab"))
      .def("classes", &Predictor::classes, "Answer classes in checkpoint order")
      .def("model_kind", &Predictor::model_kind)
      .def("predict", &Predictor::predict, py::arg("image_path"), py::arg("question"),
           "Answer, class probabilities, and per-hop attention for one image/question pair");
}
