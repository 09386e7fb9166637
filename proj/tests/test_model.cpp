#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "smem/error.hpp"
#include "smem/gradcheck.hpp"
#include "smem/model.hpp"

using namespace smem;

namespace {

Vocabulary tiny_vocab() {
  // tokens: above blob below left right; answers ranked no, yes (tie, lexicographic)
  return build_vocab({{"above blob", "yes"},
                      {"below blob", "no"},
                      {"left blob", "no"},
                      {"right blob", "yes"}},
                     1, 10);
}

Tensor random_matrix(std::vector<int> shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& x : t.flat()) x = rng.uniform(-1.0, 1.0);
  return t;
}

SMemParams zero_params(int vocab_size, int n, int m, int l, int t, int k, int hops) {
  SMemParams p;
  p.embedding = Tensor::zeros({vocab_size, n});
  p.attn_w = Tensor::zeros({m, n});
  p.attn_b = Tensor::zeros({l, n});
  for (int h = 0; h < hops; ++h) {
    p.evid_w.push_back(Tensor::zeros({m, n}));
    p.evid_b.push_back(Tensor::zeros({l, n}));
  }
  p.bow_w = Tensor::zeros({t});
  p.bow_b = Tensor::zeros({n});
  p.out_w = Tensor::zeros({k, n});
  p.out_b = Tensor::zeros({k});
  return p;
}

}  // namespace

TEST_CASE("init_params shapes follow the dimension contract") {
  Vocabulary v = tiny_vocab();
  SMemConfig cfg;
  cfg.embed_dim = 6;
  cfg.hops = 2;
  Rng rng(1, rng_stream::kInit);
  SMemParams p = init_params(cfg, v, 16, 12, 8, v.num_classes(), rng);
  CHECK(p.embedding.shape() == std::vector<int>{v.size(), 6});
  CHECK(p.attn_w.shape() == std::vector<int>{12, 6});
  CHECK(p.attn_b.shape() == std::vector<int>{16, 6});
  CHECK(p.hops() == 2);
  CHECK(p.evid_w[1].shape() == std::vector<int>{12, 6});
  CHECK(p.evid_b[0].shape() == std::vector<int>{16, 6});
  CHECK(p.bow_w.shape() == std::vector<int>{8});
  CHECK(p.bow_b.shape() == std::vector<int>{6});
  CHECK(p.out_w.shape() == std::vector<int>{2, 6});
  CHECK(p.out_b.shape() == std::vector<int>{2});

  // biases start at zero, weights inside the glorot bound
  for (double x : p.attn_b.flat()) CHECK(x == 0.0);
  for (double x : p.out_b.flat()) CHECK(x == 0.0);
  const double bound = std::sqrt(6.0 / (12 + 6));
  double spread = 0.0;
  for (double x : p.evid_w[0].flat()) {
    CHECK(std::abs(x) <= bound);
    spread = std::max(spread, std::abs(x));
  }
  CHECK(spread > 0.0);
}

TEST_CASE("init_params draws are seed-deterministic and order-stable") {
  Vocabulary v = tiny_vocab();
  SMemConfig one;
  one.embed_dim = 4;
  one.hops = 1;
  SMemConfig two = one;
  two.hops = 2;
  Rng r1(9, rng_stream::kInit);
  Rng r2(9, rng_stream::kInit);
  Rng r3(9, rng_stream::kInit);
  SMemParams a = init_params(one, v, 4, 3, 5, 2, r1);
  SMemParams b = init_params(one, v, 4, 3, 5, 2, r2);
  SMemParams c = init_params(two, v, 4, 3, 5, 2, r3);
  for (int i = 0; i < a.embedding.numel(); ++i) CHECK(a.embedding[i] == b.embedding[i]);
  for (int i = 0; i < a.bow_w.numel(); ++i) CHECK(a.bow_w[i] == b.bow_w[i]);
  // a second hop consumes draws after the first hop's matrices, so the
  // leading tensors agree across configs and later ones diverge
  for (int i = 0; i < a.embedding.numel(); ++i) CHECK(a.embedding[i] == c.embedding[i]);
  for (int i = 0; i < a.evid_w[0].numel(); ++i) CHECK(a.evid_w[0][i] == c.evid_w[0][i]);
  bool bow_diverged = false;
  for (int i = 0; i < a.bow_w.numel(); ++i) bow_diverged = bow_diverged || a.bow_w[i] != c.bow_w[i];
  CHECK(bow_diverged);

  Rng r4(10, rng_stream::kInit);
  SMemParams d = init_params(one, v, 4, 3, 5, 2, r4);
  bool seed_diverged = false;
  for (int i = 0; i < a.embedding.numel(); ++i) seed_diverged = seed_diverged || a.embedding[i] != d.embedding[i];
  CHECK(seed_diverged);
}

TEST_CASE("named_parameters lists every tensor once in a fixed order") {
  Vocabulary v = tiny_vocab();
  SMemConfig cfg;
  cfg.embed_dim = 3;
  cfg.hops = 2;
  Rng rng(2, rng_stream::kInit);
  SMemParams p = init_params(cfg, v, 4, 3, 5, 2, rng);
  auto named = p.named_parameters();
  std::vector<std::string> names;
  for (auto& [name, t] : named) names.push_back(name);
  CHECK(names == std::vector<std::string>{"embedding", "attn_w", "attn_b", "evid_w.1", "evid_b.1",
                                          "evid_w.2", "evid_b.2", "bow_w", "bow_b", "out_w", "out_b"});
  CHECK(p.parameters().size() == named.size());
}

TEST_CASE("attention_embed is S times W plus per-location bias") {
  Tape tape;
  Tensor s({2, 2}, {1, 0, 0, 1});  // identity: embedded rows equal W rows
  Tensor w({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b({2, 3}, {10, 0, 0, 0, 0, 20});
  NodeId e = attention_embed(tape, tape.constant(s), tape.constant(w), tape.constant(b));
  const Tensor& ev = tape.value(e);
  CHECK(ev.at(0, 0) == 11.0);
  CHECK(ev.at(0, 1) == 2.0);
  CHECK(ev.at(1, 2) == 26.0);
}

TEST_CASE("correlation holds word-location dot products") {
  Tape tape;
  Tensor words({2, 2}, {1, 0, 1, 1});
  Tensor embedded({3, 2}, {2, 3, 4, 5, 6, 7});
  NodeId c = correlation(tape, tape.constant(words), tape.constant(embedded));
  const Tensor& cv = tape.value(c);
  CHECK(cv.rows() == 2);  // words
  CHECK(cv.cols() == 3);  // locations
  CHECK(cv.at(0, 0) == 2.0);
  CHECK(cv.at(0, 2) == 6.0);
  CHECK(cv.at(1, 1) == 9.0);
}

TEST_CASE("word_guided_attention takes the per-location max then softmax") {
  Tape tape;
  Tensor corr({2, 2}, {1, 5, 3, 2});
  AttentionResult att = word_guided_attention(tape, tape.constant(corr), {1, 1});
  CHECK(att.argword == std::vector<int>{1, 0});
  const Tensor& w = tape.value(att.weights);
  const double z = std::exp(3.0) + std::exp(5.0);
  CHECK(w[0] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-14));
  CHECK(w[1] == doctest::Approx(std::exp(5.0) / z).epsilon(1e-14));

  // masking out the second word changes both the max and the winner
  Tape masked;
  AttentionResult att2 = word_guided_attention(masked, masked.constant(corr), {1, 0});
  CHECK(att2.argword == std::vector<int>{0, 0});
}

TEST_CASE("gather_evidence with one-hot weights selects a row") {
  Tape tape;
  Tensor weights({3}, {0, 1, 0});
  Tensor rows({3, 2}, {1, 2, 3, 4, 5, 6});
  NodeId e = gather_evidence(tape, tape.constant(weights), tape.constant(rows));
  CHECK(tape.value(e)[0] == 3.0);
  CHECK(tape.value(e)[1] == 4.0);
}

TEST_CASE("bow_question sums word vectors weighted per position") {
  Tape tape;
  Tensor words({2, 2}, {1, 2, 10, 20});
  Tensor bw({4}, {1, 0.5, 99, 99});  // trailing capacity is unused
  Tensor bb({2}, {0.5, 0});
  NodeId q = bow_question(tape, tape.constant(words), tape.constant(bw), tape.constant(bb));
  CHECK(tape.value(q)[0] == doctest::Approx(1 + 5 + 0.5).epsilon(1e-14));
  CHECK(tape.value(q)[1] == doctest::Approx(2 + 10).epsilon(1e-14));
}

TEST_CASE("all-zero parameters predict the output-bias softmax") {
  Vocabulary v = tiny_vocab();
  SMemParams p = zero_params(v.size(), 4, 3, 2, 6, 2, 1);
  p.out_b[0] = 2.0;
  p.out_b[1] = 1.0;
  SpatialFeatures f;
  f.grid_rows = 1;
  f.grid_cols = 2;
  f.matrix = Tensor::zeros({2, 3});
  EncodedQuestion q = encode_question("above blob", v, 6);
  HopTrace trace = smem_predict(p, q, f, {});
  CHECK(trace.prediction[0] == doctest::Approx(0.7310585786300049).epsilon(1e-15));
  CHECK(trace.prediction[1] == doctest::Approx(0.2689414213699951).epsilon(1e-15));
  // zero correlations mean uniform attention over the two locations
  CHECK(trace.hops[0].attention[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("trace exposes per-hop shapes and normalized distributions") {
  Vocabulary v = tiny_vocab();
  SMemConfig cfg;
  cfg.embed_dim = 5;
  cfg.hops = 3;
  Rng rng(4, rng_stream::kInit);
  SMemParams p = init_params(cfg, v, 4, 3, 6, v.num_classes(), rng);
  SpatialFeatures f;
  f.grid_rows = 2;
  f.grid_cols = 2;
  Rng frng(5, rng_stream::kTestData);
  f.matrix = random_matrix({4, 3}, frng);
  EncodedQuestion q = encode_question("above blob", v, 6);
  HopTrace trace = smem_predict(p, q, f, {});
  REQUIRE(trace.hops.size() == 3);
  CHECK(trace.hops[0].correlation.shape() == std::vector<int>{2, 4});  // real words x locations
  CHECK(trace.hops[1].correlation.shape() == std::vector<int>{4});
  CHECK(trace.argword.size() == 4);
  for (const auto& hop : trace.hops) {
    double s = 0.0;
    for (int l = 0; l < 4; ++l) s += hop.attention[l];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(hop.evidence.shape() == std::vector<int>{5});
  }
  double ps = trace.prediction[0] + trace.prediction[1];
  CHECK(ps == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("forced uniform attention averages the embedded evidence") {
  Vocabulary v = tiny_vocab();
  SMemConfig cfg;
  cfg.embed_dim = 4;
  Rng rng(6, rng_stream::kInit);
  const int L = 6, M = 3;
  SMemParams p = init_params(cfg, v, L, M, 6, v.num_classes(), rng);
  SpatialFeatures f;
  f.grid_rows = 2;
  f.grid_cols = 3;
  Rng frng(7, rng_stream::kTestData);
  f.matrix = random_matrix({L, M}, frng);
  EncodedQuestion q = encode_question("below blob", v, 6);
  ForwardOptions opts;
  opts.force_uniform_attention = true;
  HopTrace trace = smem_predict(p, q, f, opts);

  // manual mean of rows of S*W_E + b_E, accumulated in gather order
  for (int j = 0; j < cfg.embed_dim; ++j) {
    double want = 0.0;
    for (int l = 0; l < L; ++l) {
      double row = p.evid_b[0].at(l, j);
      for (int m = 0; m < M; ++m) row += f.matrix.at(l, m) * p.evid_w[0].at(m, j);
      want += (1.0 / L) * row;
    }
    CHECK(std::abs(trace.hops[0].evidence[j] - want) <= 1e-12);
  }
  for (int l = 0; l < L; ++l) CHECK(trace.hops[0].attention[l] == 1.0 / L);
}

TEST_CASE("a zeroed second hop reduces exactly to the one-hop model") {
  Vocabulary v = tiny_vocab();
  SMemConfig two;
  two.embed_dim = 5;
  two.hops = 2;
  Rng rng(8, rng_stream::kInit);
  const int L = 4, M = 3;
  SMemParams p2 = init_params(two, v, L, M, 6, v.num_classes(), rng);
  for (double& x : p2.evid_w[1].flat()) x = 0.0;
  for (double& x : p2.evid_b[1].flat()) x = 0.0;

  SMemParams p1;
  p1.embedding = p2.embedding;
  p1.attn_w = p2.attn_w;
  p1.attn_b = p2.attn_b;
  p1.evid_w.push_back(p2.evid_w[0]);
  p1.evid_b.push_back(p2.evid_b[0]);
  p1.bow_w = p2.bow_w;
  p1.bow_b = p2.bow_b;
  p1.out_w = p2.out_w;
  p1.out_b = p2.out_b;

  SpatialFeatures f;
  f.grid_rows = 2;
  f.grid_cols = 2;
  Rng frng(9, rng_stream::kTestData);
  f.matrix = random_matrix({L, M}, frng);
  EncodedQuestion q = encode_question("left blob", v, 6);
  HopTrace t2 = smem_predict(p2, q, f, {});
  HopTrace t1 = smem_predict(p1, q, f, {});
  for (int k = 0; k < v.num_classes(); ++k) CHECK(t2.prediction[k] == t1.prediction[k]);
  // the second hop's evidence is exactly zero
  for (int j = 0; j < 5; ++j) CHECK(t2.hops[1].evidence[j] == 0.0);
}

TEST_CASE("two-hop gradients survive a finite-difference sweep") {
  Vocabulary v = tiny_vocab();
  SMemConfig cfg;
  cfg.embed_dim = 4;
  cfg.hops = 2;
  Rng rng(11, rng_stream::kInit);
  const int L = 4, M = 3;
  SMemParams p = init_params(cfg, v, L, M, 4, v.num_classes(), rng);
  Rng frng(12, rng_stream::kTestData);
  Tensor features = random_matrix({L, M}, frng);
  EncodedQuestion q = encode_question("right blob", v, 4);

  auto loss_value = [&]() {
    Tape tape;
    ForwardOptions opts;
    opts.want_trace = false;
    ForwardNodes nodes = smem_forward(tape, p, q, tape.constant(features), opts);
    NodeId loss = tape.cross_entropy_with_logits(nodes.logits, 1);
    return tape.value(loss)[0];
  };
  for (auto& [name, t] : p.named_parameters()) t->zero_grad();
  {
    Tape tape;
    ForwardOptions opts;
    opts.want_trace = false;
    ForwardNodes nodes = smem_forward(tape, p, q, tape.constant(features), opts);
    tape.backward(tape.cross_entropy_with_logits(nodes.logits, 1));
  }
  GradCheckReport rep = finite_diff_check(loss_value, p.named_parameters(), 1e-6);
  CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("question padding never reaches the forward pass") {
  Vocabulary v = tiny_vocab();
  SMemConfig cfg;
  cfg.embed_dim = 4;
  Rng rng(13, rng_stream::kInit);
  SMemParams p = init_params(cfg, v, 4, 3, 16, v.num_classes(), rng);
  SpatialFeatures f;
  f.grid_rows = 2;
  f.grid_cols = 2;
  Rng frng(14, rng_stream::kTestData);
  f.matrix = random_matrix({4, 3}, frng);

  EncodedQuestion tight = encode_question("above blob", v, 2);
  EncodedQuestion padded = encode_question("above blob", v, 16);
  HopTrace a = smem_predict(p, tight, f, {});
  HopTrace b = smem_predict(p, padded, f, {});
  for (int k = 0; k < v.num_classes(); ++k) CHECK(a.prediction[k] == b.prediction[k]);
}

TEST_CASE("dropout in train mode demands an rng and perturbs the pass") {
  Vocabulary v = tiny_vocab();
  SMemConfig cfg;
  cfg.embed_dim = 4;
  Rng rng(15, rng_stream::kInit);
  SMemParams p = init_params(cfg, v, 4, 3, 6, v.num_classes(), rng);
  Tensor features = random_matrix({4, 3}, rng);
  EncodedQuestion q = encode_question("above blob", v, 6);

  Tape tape;
  ForwardOptions opts;
  opts.train = true;
  opts.dropout = 0.5;
  CHECK_THROWS_AS(smem_forward(tape, p, q, tape.constant(features), opts), Error);

  Rng drng(1, rng_stream::kDropout);
  opts.dropout_rng = &drng;
  Tape tape2;
  ForwardNodes nodes = smem_forward(tape2, p, q, tape2.constant(features), opts);
  CHECK(tape2.value(nodes.probs).all_finite());
}

TEST_CASE("an all-padding question is rejected") {
  Vocabulary v = tiny_vocab();
  SMemParams p = zero_params(v.size(), 3, 3, 2, 4, 2, 1);
  EncodedQuestion q;
  q.ids = {-1, -1};
  q.mask = {0, 0};
  Tape tape;
  try {
    smem_forward(tape, p, q, tape.constant(Tensor::zeros({2, 3})), {});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kEmptyQuestion);
  }
}

TEST_CASE("ibow pools features and cannot see position") {
  Vocabulary v = tiny_vocab();
  SMemConfig cfg;
  cfg.embed_dim = 4;
  Rng rng(16, rng_stream::kInit);
  IBowParams p = init_ibow_params(cfg, v, 3, 6, v.num_classes(), rng);
  CHECK(p.out_w.shape() == std::vector<int>{v.num_classes(), 3 + 4});

  Rng frng(17, rng_stream::kTestData);
  Tensor f1 = random_matrix({4, 3}, frng);
  Tensor f2 = Tensor::zeros({4, 3});
  // reverse the rows: same multiset of locations, different layout
  for (int l = 0; l < 4; ++l)
    for (int m = 0; m < 3; ++m) f2.at(l, m) = f1.at(3 - l, m);

  EncodedQuestion q = encode_question("above blob", v, 6);
  Tape t1;
  NodeId l1 = ibow_forward(t1, p, q, t1.constant(f1));
  Tape t2;
  NodeId l2 = ibow_forward(t2, p, q, t2.constant(f2));
  for (int k = 0; k < v.num_classes(); ++k)
    CHECK(t1.value(l1)[k] == doctest::Approx(t2.value(l2)[k]).epsilon(1e-12));
}

TEST_CASE("ibow gradients survive a finite-difference sweep") {
  Vocabulary v = tiny_vocab();
  SMemConfig cfg;
  cfg.embed_dim = 3;
  Rng rng(18, rng_stream::kInit);
  IBowParams p = init_ibow_params(cfg, v, 3, 4, v.num_classes(), rng);
  Rng frng(19, rng_stream::kTestData);
  Tensor features = random_matrix({4, 3}, frng);
  EncodedQuestion q = encode_question("below blob", v, 4);

  auto loss_value = [&]() {
    Tape tape;
    NodeId logits = ibow_forward(tape, p, q, tape.constant(features));
    return tape.value(tape.cross_entropy_with_logits(logits, 0))[0];
  };
  for (auto& [name, t] : p.named_parameters()) t->zero_grad();
  {
    Tape tape;
    NodeId logits = ibow_forward(tape, p, q, tape.constant(features));
    tape.backward(tape.cross_entropy_with_logits(logits, 0));
  }
  GradCheckReport rep = finite_diff_check(loss_value, p.named_parameters(), 1e-6);
  CHECK(rep.max_rel_error < 1e-6);
}
