#pragma once

#include <filesystem>
#include <vector>

#include "smem/synth.hpp"
#include "smem/train.hpp"

namespace smem {

// Per requested sample of a split: one PGM heatmap and one 50% PPM overlay
// per hop (nearest-neighbor upsampled, min-max scaled to 0..255, constant
// maps render as 128), plus a JSON sidecar with per-hop argmax cells, the
// hop-1 argword token at the argmax cell, and the raw attention weights.
void export_attention_maps(TrainedModel& model, const SynthSet& split, const std::vector<int>& samples,
                           const std::filesystem::path& dir);

// CSV "token,correlation": hop-1 correlation of each real question token at
// the location with the highest hop-1 attention weight.
void export_correlation_csv(TrainedModel& model, const SynthSet& split, int sample,
                            const std::filesystem::path& path);

// Feature extraction matching the model's configured source (grid-patch or
// tiny-conv); usage error for precomputed sources.
SpatialFeatures features_for(const TrainedModel& model, const RasterImage& img);

// Index of the largest attention weight (lowest index on ties).
int argmax_attention(const Tensor& weights);

}  // namespace smem
