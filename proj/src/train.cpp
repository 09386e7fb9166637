#include "smem/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"
#include "smem/error.hpp"
#include "smem/optim.hpp"

#ifndef SMEM_BUILD_ID
#define SMEM_BUILD_ID "unversioned"
#endif

namespace smem {

namespace {

using nlohmann::json;

Tensor glorot_conv(int channels, Rng& rng) {
  Tensor k({channels, 3, 5, 5});
  const double fan_in = 3 * 5 * 5, fan_out = static_cast<double>(channels) * 5 * 5;
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& x : k.flat()) x = (2.0 * rng.next_double() - 1.0) * a;
  return k;
}

// 3x3 partition cell of a pixel, row-major 0..8.
int cell3(int x, int y, int width, int height) {
  const int c1 = width / 3, c2 = 2 * width / 3;
  const int r1 = height / 3, r2 = 2 * height / 3;
  const int col = x < c1 ? 0 : (x < c2 ? 1 : 2);
  const int row = y < r1 ? 0 : (y < r2 ? 1 : 2);
  return row * 3 + col;
}

PreparedSet prepare_split(const SynthSet& split, const Vocabulary& vocab, const TrainConfig& cfg,
                          const char* split_name) {
  PreparedSet out;
  out.raw = &split;
  if (cfg.features == FeatureSource::kGridPatch) {
    out.features.reserve(split.images.size());
    for (const RasterImage& img : split.images)
      out.features.push_back(extract_grid_patch(img, cfg.grid_rows, cfg.grid_cols));
  }
  for (const QASample& q : split.samples) {
    out.questions.push_back(encode_question(q.question, vocab, cfg.question_capacity));
    const auto cls = vocab.answer_class(q.answer);
    if (!cls)
      fail(ErrorKind::kData, std::string(split_name) + " split: answer \"" + q.answer + "\" not in the answer list");
    out.answers.push_back(*cls);
    out.image_of.push_back(q.image);
    out.categories.push_back(q.category);
  }
  return out;
}

// All samples share one tape per batch; leaves of the same parameter
// accumulate into one gradient buffer.
struct ModelForward {
  TrainedModel& model;
  const TrainConfig& cfg;

  NodeId features_node(Tape& tape, const PreparedSet& set, int image) const {
    if (cfg.features == FeatureSource::kTinyConv) {
      NodeId kernel = tape.leaf(model.conv.kernel);
      NodeId bias = tape.leaf(model.conv.bias);
      return extract_tiny_conv_node(tape, set.raw->images[static_cast<size_t>(image)], kernel, bias, cfg.grid_rows,
                                    cfg.grid_cols);
    }
    return tape.constant(set.features[static_cast<size_t>(image)].matrix);
  }

  NodeId logits(Tape& tape, const PreparedSet& set, int idx, const ForwardOptions& opts) const {
    NodeId feat = features_node(tape, set, set.image_of[static_cast<size_t>(idx)]);
    if (model.kind == ModelKind::kIBow) return ibow_forward(tape, model.ibow, set.questions[static_cast<size_t>(idx)], feat);
    return smem_forward(tape, model.smem, set.questions[static_cast<size_t>(idx)], feat, opts).logits;
  }
};

}  // namespace

int hops_from_model_name(const std::string& name) {
  if (name == "ibowimg" || name == "position-heuristic") return 0;
  const std::string prefix = "smem-", suffix = "hop";
  if (name.size() > prefix.size() + suffix.size() && name.compare(0, prefix.size(), prefix) == 0 &&
      name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
    const std::string digits = name.substr(prefix.size(), name.size() - prefix.size() - suffix.size());
    if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos) {
      const int hops = std::stoi(digits);
      if (hops >= 1) return hops;
    }
  }
  fail(ErrorKind::kUsage, "unknown model kind \"" + name + "\" (expected smem-<k>hop, ibowimg, position-heuristic)");
}

Prepared prepare(const SynthDataset& dataset, const TrainConfig& cfg) {
  if (cfg.features == FeatureSource::kPrecomputed)
    fail(ErrorKind::kUsage, "precomputed features need explicit feature files; use the eval path");
  std::vector<std::pair<std::string, std::string>> corpus;
  for (const QASample& q : dataset.train.samples) corpus.emplace_back(q.question, q.answer);
  Prepared out;
  out.vocab = build_vocab(corpus, cfg.min_freq, cfg.top_k_answers);
  out.train = prepare_split(dataset.train, out.vocab, cfg, "train");
  out.test = prepare_split(dataset.test, out.vocab, cfg, "test");
  out.locations = cfg.grid_rows * cfg.grid_cols;
  out.feature_dims = cfg.features == FeatureSource::kTinyConv ? cfg.conv_channels : kGridPatchDims;
  return out;
}

CheckpointHeader TrainedModel::header() const {
  CheckpointHeader h;
  h.kind = kind;
  h.source = cfg.features;
  h.embed = cfg.embed_dim;
  h.feature = feature_dims;
  h.locations = locations;
  h.question = cfg.question_capacity;
  h.classes = vocab.num_classes();
  h.hops = kind == ModelKind::kSMem ? smem.hops() : 1;
  h.grid_rows = cfg.grid_rows;
  h.grid_cols = cfg.grid_cols;
  h.vocab_hash = vocab.hash();
  return h;
}

std::vector<std::pair<std::string, Tensor*>> TrainedModel::named_parameters() {
  auto params = kind == ModelKind::kSMem ? smem.named_parameters() : ibow.named_parameters();
  if (cfg.features == FeatureSource::kTinyConv) {
    params.emplace_back("conv_kernel", &conv.kernel);
    params.emplace_back("conv_bias", &conv.bias);
  }
  return params;
}

TrainOutcome train_model(const TrainConfig& cfg, const SynthDataset& dataset) {
  // halve_every <= 0 means a constant learning rate, matching scheduled_lr.
  if (cfg.batch_size < 1 || cfg.epochs < 0 || cfg.learning_rate <= 0.0)
    fail(ErrorKind::kUsage, "train: batch size must be positive, epochs >= 0, learning rate > 0");
  const int hops = hops_from_model_name(cfg.model);
  if (cfg.model == "position-heuristic")
    fail(ErrorKind::kUsage, "position-heuristic has no gradient training; use position_heuristic_baseline");

  Prepared prep = prepare(dataset, cfg);
  Rng init_rng(cfg.seed, rng_stream::kInit);

  TrainOutcome out;
  TrainedModel& model = out.model;
  model.kind = hops >= 1 ? ModelKind::kSMem : ModelKind::kIBow;
  model.vocab = prep.vocab;
  model.cfg = cfg;
  model.feature_dims = prep.feature_dims;
  model.locations = prep.locations;

  SMemConfig mcfg;
  mcfg.embed_dim = cfg.embed_dim;
  mcfg.hops = std::max(hops, 1);
  mcfg.dropout = cfg.dropout;
  mcfg.weight_decay = cfg.weight_decay;
  if (model.kind == ModelKind::kSMem)
    model.smem = init_params(mcfg, prep.vocab, prep.locations, prep.feature_dims, cfg.question_capacity,
                             prep.vocab.num_classes(), init_rng);
  else
    model.ibow = init_ibow_params(mcfg, prep.vocab, prep.feature_dims, cfg.question_capacity,
                                  prep.vocab.num_classes(), init_rng);
  if (cfg.features == FeatureSource::kTinyConv) {
    model.conv = make_tiny_conv(cfg.conv_channels);
    model.conv.kernel = glorot_conv(cfg.conv_channels, init_rng);
  }

  ModelForward fwd{model, cfg};
  std::vector<Tensor*> tensors;
  for (auto& [name, t] : model.named_parameters()) tensors.push_back(t);
  SgdMomentum opt(tensors, cfg.learning_rate, cfg.momentum, cfg.weight_decay);

  Rng shuffle_rng(cfg.seed, rng_stream::kShuffle);
  Rng dropout_rng(cfg.seed, rng_stream::kDropout);
  ForwardOptions train_opts;
  train_opts.train = true;
  train_opts.dropout = cfg.dropout;
  train_opts.dropout_rng = &dropout_rng;
  train_opts.want_trace = false;

  std::vector<int> order(static_cast<size_t>(prep.train.size()));
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  out.best = model;
  double best_acc = -1.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = scheduled_lr(cfg.learning_rate, epoch, cfg.halve_every);
    opt.set_learning_rate(lr);
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size), ++batches) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      Tape tape;
      NodeId total = -1;
      for (size_t i = start; i < end; ++i) {
        NodeId loss = tape.cross_entropy_with_logits(fwd.logits(tape, prep.train, order[i], train_opts),
                                                     prep.train.answers[static_cast<size_t>(order[i])]);
        total = total < 0 ? loss : tape.add(total, loss);
      }
      NodeId mean = tape.scale(total, 1.0 / static_cast<double>(end - start));
      const double batch_loss = tape.value(mean)[0];
      if (!std::isfinite(batch_loss))
        fail(ErrorKind::kNumeric, "training diverged at epoch " + std::to_string(epoch) + " batch " +
                                      std::to_string(batches) + " (loss not finite)");
      tape.backward(mean);
      opt.step();
      loss_sum += batch_loss;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    m.train_loss = batches > 0 ? loss_sum / batches : 0.0;
    m.test_accuracy = evaluate(model, prep.test).accuracy;
    out.history.push_back(m);
    if (m.test_accuracy > best_acc) {
      best_acc = m.test_accuracy;
      out.best = model;
      out.best_epoch = epoch;
    }
  }
  return out;
}

EvalReport evaluate(TrainedModel& model, const PreparedSet& set) {
  ModelForward fwd{model, model.cfg};
  ForwardOptions opts;
  opts.want_trace = false;

  EvalReport report;
  std::vector<std::string> category_order;
  std::map<std::string, std::pair<int, int>> per_cat;  // correct, total
  for (int i = 0; i < set.size(); ++i) {
    Tape tape;
    NodeId probs = tape.row_softmax(fwd.logits(tape, set, i, opts));
    const Tensor& p = tape.value(probs);
    int arg = 0;
    for (int k = 1; k < p.numel(); ++k)
      if (p[k] > p[arg]) arg = k;
    SampleRecord rec;
    rec.sample = i;
    rec.predicted = arg;
    rec.prob = p[arg];
    rec.correct = arg == set.answers[static_cast<size_t>(i)];
    report.samples.push_back(rec);

    const std::string& cat = set.categories[static_cast<size_t>(i)];
    if (per_cat.emplace(cat, std::pair<int, int>{0, 0}).second) category_order.push_back(cat);
    ++per_cat[cat].second;
    if (rec.correct) ++per_cat[cat].first;
  }
  int correct = 0;
  for (const SampleRecord& r : report.samples) correct += r.correct ? 1 : 0;
  report.accuracy = report.samples.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(report.samples.size());
  for (const std::string& cat : category_order) {
    const auto& [hit, total] = per_cat[cat];
    report.per_category.emplace_back(cat, total > 0 ? static_cast<double>(hit) / total : 0.0);
  }
  return report;
}

double vqa_consensus(const std::string& prediction, const std::vector<std::string>& human_answers) {
  if (human_answers.empty()) fail(ErrorKind::kUsage, "vqa_consensus: empty annotator list");
  const std::string normalized = normalize_answer(prediction);
  int matches = 0;
  for (const std::string& h : human_answers)
    if (normalize_answer(h) == normalized) ++matches;
  return std::min(static_cast<double>(matches) / 3.0, 1.0);
}

EvalReport position_heuristic_baseline(const SynthDataset& dataset) {
  const int width = dataset.spec.width, height = dataset.spec.height;
  // (cell of square centroid, category) -> yes/no counts from the train split
  std::map<std::pair<int, std::string>, std::pair<int, int>> votes;
  int yes_total = 0, no_total = 0;
  for (const QASample& q : dataset.train.samples) {
    const int cell = cell3(q.square_box.cx(), q.square_box.cy(), width, height);
    auto& [yes, no] = votes[{cell, q.category}];
    (q.answer == "yes" ? yes : no) += 1;
    (q.answer == "yes" ? yes_total : no_total) += 1;
  }
  const bool global_yes = yes_total > no_total;

  EvalReport report;
  std::vector<std::string> category_order;
  std::map<std::string, std::pair<int, int>> per_cat;
  int idx = 0, correct = 0;
  for (const QASample& q : dataset.test.samples) {
    const int cell = cell3(q.square_box.cx(), q.square_box.cy(), width, height);
    auto it = votes.find({cell, q.category});
    bool say_yes = global_yes;
    if (it != votes.end() && it->second.first != it->second.second) say_yes = it->second.first > it->second.second;
    SampleRecord rec;
    rec.sample = idx++;
    rec.predicted = say_yes ? 1 : 0;  // 1 = yes, 0 = no (no vocabulary here)
    rec.prob = 1.0;
    rec.correct = (say_yes ? "yes" : "no") == q.answer;
    correct += rec.correct ? 1 : 0;
    report.samples.push_back(rec);
    if (per_cat.emplace(q.category, std::pair<int, int>{0, 0}).second) category_order.push_back(q.category);
    ++per_cat[q.category].second;
    if (rec.correct) ++per_cat[q.category].first;
  }
  report.accuracy = report.samples.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(report.samples.size());
  for (const std::string& cat : category_order) {
    const auto& [hit, total] = per_cat[cat];
    report.per_category.emplace_back(cat, total > 0 ? static_cast<double>(hit) / total : 0.0);
  }
  return report;
}

const char* build_id() { return SMEM_BUILD_ID; }

TrainOutcome train_and_save(const TrainConfig& cfg, const SynthDataset& dataset, const std::filesystem::path& dir) {
  TrainOutcome out = train_model(cfg, dataset);
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "final.ckpt", out.model.header(), out.model.named_parameters());
  save_checkpoint(dir / "best.ckpt", out.best.header(), out.best.named_parameters());
  out.model.vocab.save(dir / "vocab.json");

  json manifest;
  manifest["build_id"] = build_id();
  json jcfg;
  jcfg["model"] = cfg.model;
  jcfg["features"] = feature_source_name(cfg.features);
  jcfg["grid_rows"] = cfg.grid_rows;
  jcfg["grid_cols"] = cfg.grid_cols;
  jcfg["conv_channels"] = cfg.conv_channels;
  jcfg["embed_dim"] = cfg.embed_dim;
  jcfg["question_capacity"] = cfg.question_capacity;
  jcfg["batch_size"] = cfg.batch_size;
  jcfg["epochs"] = cfg.epochs;
  jcfg["learning_rate"] = cfg.learning_rate;
  jcfg["momentum"] = cfg.momentum;
  jcfg["halve_every"] = cfg.halve_every;
  jcfg["weight_decay"] = cfg.weight_decay;
  jcfg["dropout"] = cfg.dropout;
  jcfg["seed"] = cfg.seed;
  jcfg["min_freq"] = cfg.min_freq;
  jcfg["top_k_answers"] = cfg.top_k_answers;
  manifest["config"] = jcfg;
  manifest["best_epoch"] = out.best_epoch;
  json history = json::array();
  for (const EpochMetrics& m : out.history) {
    json e;
    e["epoch"] = m.epoch;
    e["lr"] = m.lr;
    e["train_loss"] = m.train_loss;
    e["test_accuracy"] = m.test_accuracy;
    history.push_back(e);
  }
  manifest["history"] = history;
  manifest["final_test_accuracy"] = out.history.empty() ? 0.0 : out.history.back().test_accuracy;
  std::ofstream mf(dir / "manifest.json");
  if (!mf) fail(ErrorKind::kIo, "cannot open " + (dir / "manifest.json").string() + " for writing");
  mf << manifest.dump(2) << '\n';
  return out;
}

TrainedModel load_trained(const std::filesystem::path& checkpoint_path, const std::filesystem::path& vocab_path) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  Vocabulary vocab = Vocabulary::load(vocab_path);
  if (vocab.hash() != ckpt.header.vocab_hash)
    fail(ErrorKind::kUsage, "vocabulary hash mismatch between " + vocab_path.string() + " and " +
                                checkpoint_path.string());
  TrainedModel model;
  model.kind = ckpt.header.kind;
  model.vocab = std::move(vocab);
  if (model.kind == ModelKind::kSMem) {
    model.smem = smem_params_from(ckpt);
    model.cfg.model = "smem-" + std::to_string(ckpt.header.hops) + "hop";
  } else {
    model.ibow = ibow_params_from(ckpt);
    model.cfg.model = "ibowimg";
  }
  model.cfg.features = ckpt.header.source;
  model.cfg.grid_rows = ckpt.header.grid_rows;
  model.cfg.grid_cols = ckpt.header.grid_cols;
  model.cfg.embed_dim = ckpt.header.embed;
  model.cfg.question_capacity = ckpt.header.question;
  model.feature_dims = ckpt.header.feature;
  model.locations = ckpt.header.locations;
  if (ckpt.has("conv_kernel")) {
    model.conv.kernel = ckpt.tensor("conv_kernel");
    model.conv.bias = ckpt.tensor("conv_bias");
    model.cfg.conv_channels = model.conv.channels();
  }
  return model;
}

}  // namespace smem
