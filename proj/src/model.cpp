#include "smem/model.hpp"

#include <cmath>
#include <utility>

#include "smem/error.hpp"

namespace smem {

namespace {

// Uniform(-a, a) with a = sqrt(6/(fan_in+fan_out)); flat row-major fill so
// the draw sequence is reproducible.
Tensor glorot(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& x : t.flat()) x = (2.0 * rng.next_double() - 1.0) * a;
  return t;
}

std::vector<int> real_prefix(const EncodedQuestion& question) {
  const int real = question.real_len();
  if (real == 0) fail(ErrorKind::kEmptyQuestion, "forward: question has no real tokens");
  return std::vector<int>(question.ids.begin(), question.ids.begin() + real);
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> SMemParams::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("embedding", &embedding);
  out.emplace_back("attn_w", &attn_w);
  out.emplace_back("attn_b", &attn_b);
  for (int h = 0; h < hops(); ++h) {
    const std::string tag = std::to_string(h + 1);
    out.emplace_back("evid_w." + tag, &evid_w[static_cast<size_t>(h)]);
    out.emplace_back("evid_b." + tag, &evid_b[static_cast<size_t>(h)]);
  }
  out.emplace_back("bow_w", &bow_w);
  out.emplace_back("bow_b", &bow_b);
  out.emplace_back("out_w", &out_w);
  out.emplace_back("out_b", &out_b);
  return out;
}

std::vector<Tensor*> SMemParams::parameters() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

SMemParams init_params(const SMemConfig& cfg, const Vocabulary& vocab, int locations, int feature_dims,
                       int question_len, int classes, Rng& rng) {
  if (cfg.embed_dim < 1 || cfg.hops < 1) fail(ErrorKind::kUsage, "init_params: embed_dim and hops must be positive");
  if (locations < 1 || feature_dims < 1 || question_len < 1 || classes < 1)
    fail(ErrorKind::kUsage, "init_params: dimensions must be positive");
  const int n = cfg.embed_dim;
  SMemParams p;
  p.embedding = glorot({vocab.size(), n}, vocab.size(), n, rng);
  p.attn_w = glorot({feature_dims, n}, feature_dims, n, rng);
  p.attn_b = Tensor::zeros({locations, n});
  for (int h = 0; h < cfg.hops; ++h) {
    p.evid_w.push_back(glorot({feature_dims, n}, feature_dims, n, rng));
    p.evid_b.push_back(Tensor::zeros({locations, n}));
  }
  p.bow_w = glorot({question_len}, question_len, 1, rng);
  p.bow_b = Tensor::zeros({n});
  p.out_w = glorot({classes, n}, n, classes, rng);
  p.out_b = Tensor::zeros({classes});
  return p;
}

NodeId attention_embed(Tape& tape, NodeId features, NodeId w, NodeId b) {
  return tape.add(tape.matmul(features, w), b);
}

NodeId correlation(Tape& tape, NodeId word_vectors, NodeId embedded) {
  return tape.matmul_nt(word_vectors, embedded);
}

AttentionResult word_guided_attention(Tape& tape, NodeId corr, const std::vector<uint8_t>& mask) {
  MaskedMax best = tape.masked_rowwise_max(corr, mask);
  return AttentionResult{tape.row_softmax(best.values), best.argrow};
}

NodeId gather_evidence(Tape& tape, NodeId weights, NodeId embedded_evidence) {
  return tape.vec_mat(weights, embedded_evidence);
}

NodeId bow_question(Tape& tape, NodeId word_vectors, NodeId bow_w, NodeId bow_b) {
  return tape.add(tape.vec_mat(bow_w, word_vectors), bow_b);
}

ForwardNodes smem_forward(Tape& tape, SMemParams& params, const EncodedQuestion& question, NodeId features,
                          const ForwardOptions& opts) {
  const std::vector<int> ids = real_prefix(question);
  const int locations = tape.value(features).rows();

  NodeId words = tape.embed_rows(tape.leaf(params.embedding), ids);
  NodeId attn_space = attention_embed(tape, features, tape.leaf(params.attn_w), tape.leaf(params.attn_b));
  NodeId corr = correlation(tape, words, attn_space);
  AttentionResult att = word_guided_attention(tape, corr, std::vector<uint8_t>(ids.size(), 1));
  NodeId weights = att.weights;
  if (opts.force_uniform_attention)
    weights = tape.constant(Tensor::full({locations}, 1.0 / static_cast<double>(locations)));

  NodeId evid_space = attention_embed(tape, features, tape.leaf(params.evid_w[0]), tape.leaf(params.evid_b[0]));
  NodeId evidence = gather_evidence(tape, weights, evid_space);
  NodeId question_vec = bow_question(tape, words, tape.leaf(params.bow_w), tape.leaf(params.bow_b));
  NodeId state = tape.add(evidence, question_vec);

  ForwardNodes out;
  if (opts.want_trace) {
    out.trace.hops.push_back({tape.value(corr), tape.value(weights), tape.value(evidence)});
    out.trace.argword = att.argword;
  }

  // Hop k scores locations with hop k-1's evidence embedding, then gathers
  // through a fresh one; gradients reach the shared weights via both paths.
  for (int h = 1; h < params.hops(); ++h) {
    NodeId corr_k = tape.mat_vec(evid_space, state);
    NodeId weights_k = tape.row_softmax(corr_k);
    evid_space = attention_embed(tape, features, tape.leaf(params.evid_w[static_cast<size_t>(h)]),
                                 tape.leaf(params.evid_b[static_cast<size_t>(h)]));
    NodeId evidence_k = gather_evidence(tape, weights_k, evid_space);
    state = tape.add(state, evidence_k);
    if (opts.want_trace) out.trace.hops.push_back({tape.value(corr_k), tape.value(weights_k), tape.value(evidence_k)});
  }

  out.hidden = state;
  NodeId activated = tape.relu(state);
  if (opts.train && opts.dropout > 0.0) {
    if (opts.dropout_rng == nullptr) fail(ErrorKind::kUsage, "forward: dropout needs an rng in train mode");
    activated = tape.dropout(activated, opts.dropout, *opts.dropout_rng);
  }
  out.logits = tape.add(tape.mat_vec(tape.leaf(params.out_w), activated), tape.leaf(params.out_b));
  out.probs = tape.row_softmax(out.logits);
  if (opts.want_trace) out.trace.prediction = tape.value(out.probs);
  return out;
}

HopTrace smem_predict(SMemParams& params, const EncodedQuestion& question, const SpatialFeatures& features,
                      const ForwardOptions& opts) {
  Tape tape;
  NodeId mem = tape.constant(features.matrix);
  ForwardOptions local = opts;
  local.want_trace = true;
  ForwardNodes nodes = smem_forward(tape, params, question, mem, local);
  return nodes.trace;
}

std::vector<std::pair<std::string, Tensor*>> IBowParams::named_parameters() {
  return {{"embedding", &embedding}, {"bow_w", &bow_w}, {"bow_b", &bow_b}, {"out_w", &out_w}, {"out_b", &out_b}};
}

std::vector<Tensor*> IBowParams::parameters() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

IBowParams init_ibow_params(const SMemConfig& cfg, const Vocabulary& vocab, int feature_dims, int question_len,
                            int classes, Rng& rng) {
  if (cfg.embed_dim < 1) fail(ErrorKind::kUsage, "init_ibow_params: embed_dim must be positive");
  const int n = cfg.embed_dim;
  IBowParams p;
  p.embedding = glorot({vocab.size(), n}, vocab.size(), n, rng);
  p.bow_w = glorot({question_len}, question_len, 1, rng);
  p.bow_b = Tensor::zeros({n});
  p.out_w = glorot({classes, feature_dims + n}, feature_dims + n, classes, rng);
  p.out_b = Tensor::zeros({classes});
  return p;
}

NodeId ibow_forward(Tape& tape, IBowParams& params, const EncodedQuestion& question, NodeId features) {
  const std::vector<int> ids = real_prefix(question);
  NodeId words = tape.embed_rows(tape.leaf(params.embedding), ids);
  NodeId question_vec = bow_question(tape, words, tape.leaf(params.bow_w), tape.leaf(params.bow_b));
  NodeId pooled = tape.mean_rows(features);
  NodeId joint = tape.concat(pooled, question_vec);
  return tape.add(tape.mat_vec(tape.leaf(params.out_w), joint), tape.leaf(params.out_b));
}

}  // namespace smem
