#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "smem/model.hpp"
#include "smem/tensor.hpp"

namespace smem {

enum class ModelKind : uint32_t { kSMem = 0, kIBow = 1 };
enum class FeatureSource : uint32_t { kGridPatch = 0, kTinyConv = 1, kPrecomputed = 2 };

const char* model_kind_name(ModelKind kind);
const char* feature_source_name(FeatureSource source);

struct CheckpointHeader {
  ModelKind kind = ModelKind::kSMem;
  FeatureSource source = FeatureSource::kGridPatch;
  int embed = 0;      // N
  int feature = 0;    // M
  int locations = 0;  // L
  int question = 0;   // T
  int classes = 0;    // K
  int hops = 1;       // H
  int grid_rows = 0;
  int grid_cols = 0;
  uint64_t vocab_hash = 0;
};

// "SMEMCKPT" file: header fields as little-endian u32/u64, then each tensor
// as (u32 name length, name, u32 rank, u32 extents..., f64 values). Doubles
// are written as raw bit patterns, so a round-trip is bit-exact.
void save_checkpoint(const std::filesystem::path& path, const CheckpointHeader& header,
                     const std::vector<std::pair<std::string, Tensor*>>& tensors);

struct Checkpoint {
  CheckpointHeader header;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;  // data error if absent
  bool has(const std::string& name) const;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

// Rebuild typed parameters, validating names and shapes against the header.
SMemParams smem_params_from(const Checkpoint& ckpt);
IBowParams ibow_params_from(const Checkpoint& ckpt);

}  // namespace smem
