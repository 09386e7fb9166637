#pragma once

#include <memory>
#include <string>
#include <vector>

#include "smem/features.hpp"
#include "smem/rng.hpp"
#include "smem/tape.hpp"
#include "smem/tensor.hpp"
#include "smem/vocab.hpp"

namespace smem {

struct ModelDims {
  int vocab_size = 0;
  int embed = 0;      // N
  int feature = 0;    // M
  int locations = 0;  // L
  int question = 0;   // T
  int classes = 0;    // K
  int hops = 1;       // H
};

struct SMemConfig {
  int embed_dim = 64;
  int hops = 1;
  double dropout = 0.0;       // on ReLU(hidden), inverted scaling
  double weight_decay = 0.0;  // applied by the optimizer
};

// All learned tensors of the spatial memory model. Evidence embeddings are
// indexed by hop; hop k's attention embedding is hop k-1's evidence
// embedding, hop 1 scores with the dedicated attention embedding.
struct SMemParams {
  Tensor embedding;             // |V| x N; id -1 embeds to a frozen zero vector
  Tensor attn_w;                // M x N
  Tensor attn_b;                // L x N
  std::vector<Tensor> evid_w;   // H of M x N
  std::vector<Tensor> evid_b;   // H of L x N
  Tensor bow_w;                 // T
  Tensor bow_b;                 // N
  Tensor out_w;                 // K x N
  Tensor out_b;                 // K

  int hops() const { return static_cast<int>(evid_w.size()); }
  std::vector<std::pair<std::string, Tensor*>> named_parameters();
  std::vector<Tensor*> parameters();
};

// Glorot-uniform matrices (a = sqrt(6/(fan_in+fan_out))), zero biases.
// Draw order: embedding, attn_w, evidence embeddings in hop order, bow_w,
// out_w; biases draw nothing.
SMemParams init_params(const SMemConfig& cfg, const Vocabulary& vocab, int locations, int feature_dims, int question_len,
                       int classes, Rng& rng);

// Per-hop diagnostics captured during a forward pass.
struct HopTrace {
  struct Hop {
    Tensor correlation;  // hop 1: T_real x L matrix; later hops: L vector
    Tensor attention;    // L, sums to 1
    Tensor evidence;     // N
  };
  std::vector<Hop> hops;
  std::vector<int> argword;  // hop 1: per location, best-correlated real-token position
  Tensor prediction;         // K, sums to 1
};

struct ForwardOptions {
  bool train = false;
  double dropout = 0.0;
  Rng* dropout_rng = nullptr;
  bool force_uniform_attention = false;  // hop 1 only
  bool want_trace = true;
};

struct ForwardNodes {
  NodeId logits = -1;
  NodeId probs = -1;
  NodeId hidden = -1;
  HopTrace trace;
};

// --- building blocks of the forward pass (exposed for tests) ---

// S*W + b: projects visual features into the word-embedding space.
NodeId attention_embed(Tape& tape, NodeId features, NodeId w, NodeId b);
// C = V * embedded^T; row j holds word j's dot products with all locations.
NodeId correlation(Tape& tape, NodeId word_vectors, NodeId embedded);
struct AttentionResult {
  NodeId weights;            // L, softmax output
  std::vector<int> argword;  // winning word per location
};
// softmax over locations of the per-location max correlation over real words.
AttentionResult word_guided_attention(Tape& tape, NodeId corr, const std::vector<uint8_t>& mask);
// attention-weighted sum of embedded evidence rows.
NodeId gather_evidence(Tape& tape, NodeId weights, NodeId embedded_evidence);
// Q = bow_w * V + bow_b; padding rows embed to zero so they contribute nothing.
NodeId bow_question(Tape& tape, NodeId word_vectors, NodeId bow_w, NodeId bow_b);

// Full model over a tape. `features` is the L x M memory node (constant for
// grid/precomputed features, conv output for the trainable extractor).
ForwardNodes smem_forward(Tape& tape, SMemParams& params, const EncodedQuestion& question, NodeId features,
                          const ForwardOptions& opts);

// Forward-only convenience: prediction distribution and trace.
HopTrace smem_predict(SMemParams& params, const EncodedQuestion& question, const SpatialFeatures& features,
                      const ForwardOptions& opts);

// --- iBOWIMG baseline: softmax over [mean-pooled features ; BOW question] ---
struct IBowParams {
  Tensor embedding;  // |V| x N
  Tensor bow_w;      // T
  Tensor bow_b;      // N
  Tensor out_w;      // K x (M+N)
  Tensor out_b;      // K

  std::vector<std::pair<std::string, Tensor*>> named_parameters();
  std::vector<Tensor*> parameters();
};

IBowParams init_ibow_params(const SMemConfig& cfg, const Vocabulary& vocab, int feature_dims, int question_len,
                            int classes, Rng& rng);

NodeId ibow_forward(Tape& tape, IBowParams& params, const EncodedQuestion& question, NodeId features);

}  // namespace smem
