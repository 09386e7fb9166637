#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "smem/rng.hpp"
#include "smem/tensor.hpp"

namespace smem {

using NodeId = int;

struct MaskedMax {
  NodeId values;            // [cols] column-wise max over unmasked rows
  std::vector<int> argrow;  // winning row per column, lowest index on ties
};

struct ConvGeom {
  int in_channels = 3;
  int kernel = 5;
  int out_rows = 0;  // grid rows
  int out_cols = 0;  // grid cols
  int stride_y = 0;
  int stride_x = 0;
};

// Reverse-mode tape. Ops append nodes and backward closures; backward()
// walks them in reverse creation order, so gradient reduction order is
// fixed and runs are bitwise reproducible. One tape per batch.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Value without gradient tracking.
  NodeId constant(Tensor value);
  // Leaf bound to an external parameter; backward accumulates into its grad.
  NodeId leaf(Tensor& param);

  // Stable across later node creation (deque storage).
  const Tensor& value(NodeId id) const;
  // Gradient buffer of a node (after backward). Usage error if untracked.
  const std::vector<double>& grad(NodeId id) const;
  bool tracked(NodeId id) const;

  // [p,q]x[q,r] -> [p,r]
  NodeId matmul(NodeId a, NodeId b);
  // a[p,q] * b[r,q]^T -> [p,r]
  NodeId matmul_nt(NodeId a, NodeId b);
  // v[l] * m[l,n] -> [n]; v may be longer than l, the prefix is used.
  NodeId vec_mat(NodeId v, NodeId m);
  // m[l,n] * v[n] -> [l]
  NodeId mat_vec(NodeId m, NodeId v);
  NodeId add(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);
  NodeId relu(NodeId a);
  // Softmax over the last axis with per-row max subtraction.
  NodeId row_softmax(NodeId a);
  // Column-wise max of c[rows,cols] over rows where mask is true.
  MaskedMax masked_rowwise_max(NodeId c, const std::vector<uint8_t>& row_mask);
  // Rows of table for each id; id -1 yields a zero row and no gradient.
  NodeId embed_rows(NodeId table, const std::vector<int>& ids);
  // Mean over rows: [l,n] -> [n].
  NodeId mean_rows(NodeId m);
  NodeId concat(NodeId a, NodeId b);  // rank-1 only
  // Inverted dropout; draws one uniform per element.
  NodeId dropout(NodeId a, double rate, Rng& rng);
  // Scalar: logsumexp(logits) - logits[target].
  NodeId cross_entropy_with_logits(NodeId logits, int target);
  // Single conv layer over an image laid out [C_in, H, W]; output rows are
  // grid locations (row-major), columns are output channels.
  NodeId conv2d_grid(NodeId kernel, NodeId bias, NodeId image, const ConvGeom& geom);

  // Seeds d(loss)=1 and pulls gradients backward. loss must be scalar.
  void backward(NodeId loss);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor own;                    // storage unless bound
    Tensor* bound = nullptr;       // external parameter, if a leaf
    std::vector<double> grad;      // empty when untracked
    std::function<void()> pull;    // backward step, empty for leaves/constants
  };

  Tensor& val(NodeId id) { Node& n = nodes_[static_cast<size_t>(id)]; return n.bound ? *n.bound : n.own; }
  const Tensor& val(NodeId id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    return n.bound ? *n.bound : n.own;
  }
  std::vector<double>& gbuf(NodeId id) { return nodes_[static_cast<size_t>(id)].grad; }
  NodeId push(Tensor value, bool track);
  void add_grad(NodeId id, int index, double v) {
    auto& g = nodes_[static_cast<size_t>(id)].grad;
    if (!g.empty()) g[static_cast<size_t>(index)] += v;
  }

  std::deque<Node> nodes_;  // deque: references survive push_back
};

}  // namespace smem
