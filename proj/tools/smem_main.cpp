#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "smem/accept.hpp"
#include "smem/error.hpp"
#include "smem/gradcheck.hpp"
#include "smem/synth.hpp"
#include "smem/train.hpp"
#include "smem/viz.hpp"

namespace {

using nlohmann::json;
using namespace smem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitAcceptance = 2;

FeatureSource parse_features(const std::string& name) {
  if (name == "grid" || name == "grid-patch") return FeatureSource::kGridPatch;
  if (name == "conv" || name == "tiny-conv") return FeatureSource::kTinyConv;
  if (name == "precomputed") return FeatureSource::kPrecomputed;
  fail(ErrorKind::kUsage, "unknown feature source \"" + name + "\" (grid | conv | precomputed)");
}

// Fields from --config JSON apply only where the command line stayed silent.
void apply_config_file(const std::string& path, const CLI::App& cmd, TrainConfig& cfg,
                       const std::vector<std::pair<std::string, std::function<void(const json&)>>>& setters) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kUsage, "cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, path + ": " + e.what());
  }
  (void)cfg;
  for (const auto& [flag, setter] : setters) {
    const std::string key = flag.substr(2);  // strip --
    if (!j.contains(key)) continue;
    const CLI::Option* opt = cmd.get_option_no_throw(flag);
    if (opt != nullptr && opt->count() > 0) continue;  // flag wins
    setter(j[key]);
  }
}

void add_train_flags(CLI::App* cmd, TrainConfig& cfg, std::string& features_name) {
  cmd->add_option("--model", cfg.model, "smem-<k>hop | ibowimg | position-heuristic");
  cmd->add_option("--features", features_name, "grid | conv | precomputed");
  cmd->add_option("--grid-rows", cfg.grid_rows, "attention grid rows");
  cmd->add_option("--grid-cols", cfg.grid_cols, "attention grid cols");
  cmd->add_option("--conv-channels", cfg.conv_channels, "tiny-conv output channels");
  cmd->add_option("--embed-dim", cfg.embed_dim, "word embedding dimension");
  cmd->add_option("--capacity", cfg.question_capacity, "question token capacity");
  cmd->add_option("--batch", cfg.batch_size, "minibatch size");
  cmd->add_option("--epochs", cfg.epochs, "training epochs");
  cmd->add_option("--lr", cfg.learning_rate, "base learning rate");
  cmd->add_option("--momentum", cfg.momentum, "momentum coefficient");
  cmd->add_option("--halve-every", cfg.halve_every, "epochs between learning-rate halvings");
  cmd->add_option("--weight-decay", cfg.weight_decay, "L2 coefficient");
  cmd->add_option("--dropout", cfg.dropout, "dropout rate on the hidden vector");
  cmd->add_option("--seed", cfg.seed, "rng seed");
  cmd->add_option("--min-freq", cfg.min_freq, "vocabulary frequency threshold");
  cmd->add_option("--top-k-answers", cfg.top_k_answers, "answer classes kept");
}

std::vector<std::pair<std::string, std::function<void(const json&)>>> train_setters(TrainConfig& cfg,
                                                                                    std::string& features_name) {
  return {
      {"--model", [&](const json& v) { cfg.model = v.get<std::string>(); }},
      {"--features", [&](const json& v) { features_name = v.get<std::string>(); }},
      {"--grid-rows", [&](const json& v) { cfg.grid_rows = v.get<int>(); }},
      {"--grid-cols", [&](const json& v) { cfg.grid_cols = v.get<int>(); }},
      {"--conv-channels", [&](const json& v) { cfg.conv_channels = v.get<int>(); }},
      {"--embed-dim", [&](const json& v) { cfg.embed_dim = v.get<int>(); }},
      {"--capacity", [&](const json& v) { cfg.question_capacity = v.get<int>(); }},
      {"--batch", [&](const json& v) { cfg.batch_size = v.get<int>(); }},
      {"--epochs", [&](const json& v) { cfg.epochs = v.get<int>(); }},
      {"--lr", [&](const json& v) { cfg.learning_rate = v.get<double>(); }},
      {"--momentum", [&](const json& v) { cfg.momentum = v.get<double>(); }},
      {"--halve-every", [&](const json& v) { cfg.halve_every = v.get<int>(); }},
      {"--weight-decay", [&](const json& v) { cfg.weight_decay = v.get<double>(); }},
      {"--dropout", [&](const json& v) { cfg.dropout = v.get<double>(); }},
      {"--seed", [&](const json& v) { cfg.seed = v.get<uint64_t>(); }},
      {"--min-freq", [&](const json& v) { cfg.min_freq = v.get<int>(); }},
      {"--top-k-answers", [&](const json& v) { cfg.top_k_answers = v.get<int>(); }},
  };
}

json report_to_json(const EvalReport& report) {
  json j;
  j["accuracy"] = report.accuracy;
  json cats = json::object();
  for (const auto& [cat, acc] : report.per_category) cats[cat] = acc;
  j["per_category"] = cats;
  j["samples"] = report.samples.size();
  return j;
}

int run_generate(const std::string& task, SynthSpec spec, const std::string& out_dir) {
  spec.task = task == "rel" || task == "relative" ? SynthTask::kRelative : SynthTask::kAbsolute;
  if (task != "abs" && task != "absolute" && task != "rel" && task != "relative")
    fail(ErrorKind::kUsage, "unknown task \"" + task + "\" (abs | rel)");
  SynthDataset data = generate(spec);
  serialize_dataset(data, out_dir);
  std::cout << "wrote " << data.train.images.size() << " train / " << data.test.images.size() << " test images and "
            << data.train.samples.size() + data.test.samples.size() << " samples to " << out_dir << "\n";
  return kExitOk;
}

int run_train(const TrainConfig& cfg, const std::string& data_dir, const std::string& out_dir) {
  SynthDataset data = load_dataset(data_dir);
  if (cfg.model == "position-heuristic") {
    EvalReport report = position_heuristic_baseline(data);
    std::filesystem::create_directories(out_dir);
    json manifest;
    manifest["build_id"] = build_id();
    manifest["model"] = cfg.model;
    manifest["report"] = report_to_json(report);
    std::ofstream out(std::filesystem::path(out_dir) / "manifest.json");
    out << manifest.dump(2) << '\n';
    std::cout << "position heuristic test accuracy " << report.accuracy << "\n";
    return kExitOk;
  }
  TrainOutcome outcome = train_and_save(cfg, data, out_dir);
  const double final_acc = outcome.history.empty() ? 0.0 : outcome.history.back().test_accuracy;
  std::cout << "final test accuracy " << final_acc << " (best " << (outcome.best_epoch >= 0 ? "epoch " : "n/a ")
            << outcome.best_epoch << "), checkpoints in " << out_dir << "\n";
  return kExitOk;
}

int run_eval(const std::string& ckpt, const std::string& vocab_path, const std::string& data_dir,
             const std::string& split) {
  SynthDataset data = load_dataset(data_dir);
  TrainedModel model = load_trained(ckpt, vocab_path);
  Prepared prep = prepare(data, model.cfg);
  if (prep.vocab.hash() != model.vocab.hash())
    fail(ErrorKind::kUsage, "dataset vocabulary does not match the checkpoint vocabulary");
  EvalReport report = evaluate(model, split == "train" ? prep.train : prep.test);
  std::cout << report_to_json(report).dump(2) << "\n";
  return kExitOk;
}

int run_viz(const std::string& ckpt, const std::string& vocab_path, const std::string& data_dir,
            const std::string& split, std::vector<int> samples, const std::string& out_dir, int correlation_sample) {
  SynthDataset data = load_dataset(data_dir);
  TrainedModel model = load_trained(ckpt, vocab_path);
  const SynthSet& set = split == "train" ? data.train : data.test;
  if (samples.empty()) samples = {0};
  export_attention_maps(model, set, samples, out_dir);
  if (correlation_sample >= 0)
    export_correlation_csv(model, set, correlation_sample,
                           std::filesystem::path(out_dir) /
                               ("correlation_" + std::to_string(correlation_sample) + ".csv"));
  std::cout << "wrote attention maps for " << samples.size() << " samples to " << out_dir << "\n";
  return kExitOk;
}

int run_gradcheck() {
  AcceptanceContext ctx;
  CriterionResult r = run_criterion(1, ctx);
  std::cout << r.detail << "\n";
  return r.pass ? kExitOk : kExitAcceptance;
}

int run_repro(const std::string& scenario) {
  AcceptanceContext ctx;
  std::vector<CriterionResult> results;
  if (scenario == "all") {
    results = run_all_criteria(ctx);
  } else {
    int id = -1;
    for (const auto& [name, cid] : repro_scenarios())
      if (name == scenario) id = cid;
    if (id < 0) {
      std::string known = "all";
      for (const auto& [name, cid] : repro_scenarios()) known += ", " + name;
      fail(ErrorKind::kUsage, "unknown scenario \"" + scenario + "\" (known: " + known + ")");
    }
    results.push_back(run_criterion(id, ctx));
  }
  bool all_pass = true;
  for (const CriterionResult& r : results) {
    std::cout << (r.pass ? "PASS" : "FAIL") << " criterion " << r.id << " (" << r.name << "): " << r.detail << "\n";
    all_pass = all_pass && r.pass;
  }
  return all_pass ? kExitOk : kExitAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial memory network for visual question answering"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset");
  std::string gen_task = "abs", gen_out = "dataset";
  SynthSpec gen_spec;
  gen->add_option("--task", gen_task, "abs | rel");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_spec.seed, "rng seed");
  gen->add_option("--train-images", gen_spec.train_images, "train image count");
  gen->add_option("--test-images", gen_spec.test_images, "test image count");
  gen->add_option("--width", gen_spec.width, "image width");
  gen->add_option("--height", gen_spec.height, "image height");
  gen->add_option("--square", gen_spec.square_side, "red square side");
  gen->add_option("--distractors", gen_spec.num_distractors, "extra blobs (relative task)");

  // train
  auto* train = app.add_subcommand("train", "Train a model on a generated dataset");
  TrainConfig cfg;
  std::string features_name = "grid", train_data, train_out = "run", config_path;
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--out", train_out, "output directory");
  train->add_option("--config", config_path, "JSON config; command-line flags override");
  add_train_flags(train, cfg, features_name);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt, eval_vocab, eval_data, eval_split = "test";
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--vocab", eval_vocab, "vocabulary file")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--split", eval_split, "train | test");

  // viz
  auto* viz = app.add_subcommand("viz", "Export attention heatmaps and overlays");
  std::string viz_ckpt, viz_vocab, viz_data, viz_split = "test", viz_out = "viz";
  std::vector<int> viz_samples;
  int viz_corr = -1;
  viz->add_option("--checkpoint", viz_ckpt, "checkpoint file")->required();
  viz->add_option("--vocab", viz_vocab, "vocabulary file")->required();
  viz->add_option("--data", viz_data, "dataset directory")->required();
  viz->add_option("--split", viz_split, "train | test");
  viz->add_option("--samples", viz_samples, "sample indices");
  viz->add_option("--out", viz_out, "output directory");
  viz->add_option("--correlation", viz_corr, "also dump the correlation CSV for this sample");

  // gradcheck
  app.add_subcommand("gradcheck", "Finite-difference check of the two-hop backward pass");

  // repro
  auto* repro = app.add_subcommand("repro", "Run a named acceptance scenario");
  std::string scenario = "all";
  repro->add_option("scenario", scenario, "scenario name or \"all\"");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return run_generate(gen_task, gen_spec, gen_out);
    if (train->parsed()) {
      if (!config_path.empty()) apply_config_file(config_path, *train, cfg, train_setters(cfg, features_name));
      cfg.features = parse_features(features_name);
      return run_train(cfg, train_data, train_out);
    }
    if (eval->parsed()) return run_eval(eval_ckpt, eval_vocab, eval_data, eval_split);
    if (viz->parsed()) return run_viz(viz_ckpt, viz_vocab, viz_data, viz_split, viz_samples, viz_out, viz_corr);
    if (app.get_subcommand("gradcheck")->parsed()) return run_gradcheck();
    if (repro->parsed()) return run_repro(scenario);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
