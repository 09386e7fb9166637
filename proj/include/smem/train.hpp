#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "smem/checkpoint.hpp"
#include "smem/features.hpp"
#include "smem/model.hpp"
#include "smem/synth.hpp"
#include "smem/vocab.hpp"

namespace smem {

struct TrainConfig {
  std::string model = "smem-1hop";  // smem-<k>hop | ibowimg | position-heuristic
  FeatureSource features = FeatureSource::kGridPatch;
  int grid_rows = 4;
  int grid_cols = 4;
  int conv_channels = 12;  // tiny-conv feature dim
  int embed_dim = 64;      // N
  int question_capacity = 12;
  int batch_size = 50;
  int epochs = 50;
  double learning_rate = 0.01;
  double momentum = 0.9;
  int halve_every = 6;  // lr(e) = base / 2^(e/halve_every)
  double weight_decay = 0.0;
  double dropout = 0.0;
  uint64_t seed = 0;
  int min_freq = 1;
  int top_k_answers = 1000;
};

// "smem-1hop" -> 1, "smem-2hop" -> 2, ... ; 0 for the baselines.
int hops_from_model_name(const std::string& name);

// One split with features extracted and questions encoded.
struct PreparedSet {
  const SynthSet* raw = nullptr;           // source split (images for tiny-conv)
  std::vector<SpatialFeatures> features;   // per image (empty for tiny-conv)
  std::vector<EncodedQuestion> questions;  // per sample
  std::vector<int> answers;                // per sample, class id
  std::vector<int> image_of;               // per sample
  std::vector<std::string> categories;     // per sample

  int size() const { return static_cast<int>(questions.size()); }
};

struct Prepared {
  Vocabulary vocab;
  PreparedSet train;
  PreparedSet test;
  int feature_dims = 0;
  int locations = 0;
};

// Vocabulary comes from the train split only; both splits are encoded with
// it. Data error if a test answer is missing from the answer list.
Prepared prepare(const SynthDataset& dataset, const TrainConfig& cfg);

struct TrainedModel {
  ModelKind kind = ModelKind::kSMem;
  SMemParams smem;
  IBowParams ibow;
  TinyConvParams conv;  // feature source tiny-conv only
  Vocabulary vocab;
  TrainConfig cfg;
  int feature_dims = 0;
  int locations = 0;

  CheckpointHeader header() const;
  std::vector<std::pair<std::string, Tensor*>> named_parameters();
};

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
};

struct TrainOutcome {
  TrainedModel model;  // after the last epoch
  TrainedModel best;   // highest test accuracy, earliest epoch on ties
  int best_epoch = -1;
  std::vector<EpochMetrics> history;
};

// SGD with momentum over shuffled minibatches; aborts with a numeric error
// naming epoch and batch if the loss leaves the finite range.
TrainOutcome train_model(const TrainConfig& cfg, const SynthDataset& dataset);

struct SampleRecord {
  int sample = 0;
  int predicted = 0;
  double prob = 0.0;  // probability assigned to the predicted class
  bool correct = false;
};

struct EvalReport {
  double accuracy = 0.0;
  std::vector<std::pair<std::string, double>> per_category;  // first-appearance order
  std::vector<SampleRecord> samples;
};

EvalReport evaluate(TrainedModel& model, const PreparedSet& set);

// min(matches/3, 1) against a list of human answers, after normalization.
double vqa_consensus(const std::string& prediction, const std::vector<std::string>& human_answers);

// Majority answer per (3x3 cell of the square centroid, question category),
// fitted on train and applied to test. Falls back to the global majority for
// unseen keys.
EvalReport position_heuristic_baseline(const SynthDataset& dataset);

// Writes final + best checkpoints, the vocabulary, and a run manifest
// (config, seed, build id, per-epoch metrics) into dir.
TrainOutcome train_and_save(const TrainConfig& cfg, const SynthDataset& dataset, const std::filesystem::path& dir);

// Rebuild a TrainedModel from files written by train_and_save.
TrainedModel load_trained(const std::filesystem::path& checkpoint_path, const std::filesystem::path& vocab_path);

const char* build_id();  // git-describe-style version stamp

}  // namespace smem
