#include "smem/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace smem {

namespace {
[[noreturn]] void dim_fail(const char* op, const Tensor& a, const Tensor& b) {
  fail(ErrorKind::kDimension,
       std::string(op) + ": incompatible shapes " + a.shape_string() + " and " + b.shape_string());
}
}  // namespace

NodeId Tape::push(Tensor value, bool track) {
  Node n;
  n.own = std::move(value);
  if (track) n.grad.assign(static_cast<size_t>(n.own.numel()), 0.0);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::constant(Tensor value) { return push(std::move(value), false); }

NodeId Tape::leaf(Tensor& param) {
  Node n;
  n.bound = &param;
  n.grad.assign(static_cast<size_t>(param.numel()), 0.0);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Tensor& Tape::value(NodeId id) const { return val(id); }

const std::vector<double>& Tape::grad(NodeId id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.empty()) fail(ErrorKind::kUsage, "node does not track gradients");
  return n.grad;
}

bool Tape::tracked(NodeId id) const { return !nodes_[static_cast<size_t>(id)].grad.empty(); }

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows()) dim_fail("matmul", A, B);
  const int p = A.rows(), q = A.cols(), r = B.cols();
  Tensor C({p, r});
  for (int i = 0; i < p; ++i)
    for (int k = 0; k < q; ++k) {
      const double aik = A.at(i, k);
      for (int j = 0; j < r; ++j) C.at(i, j) += aik * B.at(k, j);
    }
  NodeId out = push(std::move(C), tracked(a) || tracked(b));
  if (!tracked(out)) return out;
  nodes_.back().pull = [this, a, b, out, p, q, r] {
    const auto& dC = gbuf(out);
    const Tensor& A2 = val(a);
    const Tensor& B2 = val(b);
    auto& dA = gbuf(a);
    auto& dB = gbuf(b);
    if (!dA.empty())
      for (int i = 0; i < p; ++i)
        for (int k = 0; k < q; ++k) {
          double s = 0;
          for (int j = 0; j < r; ++j) s += dC[static_cast<size_t>(i) * r + j] * B2.at(k, j);
          dA[static_cast<size_t>(i) * q + k] += s;
        }
    if (!dB.empty())
      for (int k = 0; k < q; ++k)
        for (int j = 0; j < r; ++j) {
          double s = 0;
          for (int i = 0; i < p; ++i) s += A2.at(i, k) * dC[static_cast<size_t>(i) * r + j];
          dB[static_cast<size_t>(k) * r + j] += s;
        }
  };
  return out;
}

NodeId Tape::matmul_nt(NodeId a, NodeId b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.cols()) dim_fail("matmul_nt", A, B);
  const int p = A.rows(), q = A.cols(), r = B.rows();
  Tensor C({p, r});
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < r; ++j) {
      double s = 0;
      for (int k = 0; k < q; ++k) s += A.at(i, k) * B.at(j, k);
      C.at(i, j) = s;
    }
  NodeId out = push(std::move(C), tracked(a) || tracked(b));
  if (!tracked(out)) return out;
  nodes_.back().pull = [this, a, b, out, p, q, r] {
    const auto& dC = gbuf(out);
    const Tensor& A2 = val(a);
    const Tensor& B2 = val(b);
    auto& dA = gbuf(a);
    auto& dB = gbuf(b);
    if (!dA.empty())
      for (int i = 0; i < p; ++i)
        for (int k = 0; k < q; ++k) {
          double s = 0;
          for (int j = 0; j < r; ++j) s += dC[static_cast<size_t>(i) * r + j] * B2.at(j, k);
          dA[static_cast<size_t>(i) * q + k] += s;
        }
    if (!dB.empty())
      for (int j = 0; j < r; ++j)
        for (int k = 0; k < q; ++k) {
          double s = 0;
          for (int i = 0; i < p; ++i) s += dC[static_cast<size_t>(i) * r + j] * A2.at(i, k);
          dB[static_cast<size_t>(j) * q + k] += s;
        }
  };
  return out;
}

NodeId Tape::vec_mat(NodeId v, NodeId m) {
  const Tensor& V = val(v);
  const Tensor& M = val(m);
  if (V.rank() != 1 || M.rank() != 2 || V.extent(0) < M.rows()) dim_fail("vec_mat", V, M);
  const int l = M.rows(), n = M.cols();
  Tensor out_t({n});
  for (int i = 0; i < l; ++i) {
    const double vi = V[i];
    for (int j = 0; j < n; ++j) out_t[j] += vi * M.at(i, j);
  }
  NodeId out = push(std::move(out_t), tracked(v) || tracked(m));
  if (!tracked(out)) return out;
  nodes_.back().pull = [this, v, m, out, l, n] {
    const auto& dO = gbuf(out);
    const Tensor& V2 = val(v);
    const Tensor& M2 = val(m);
    auto& dV = gbuf(v);
    auto& dM = gbuf(m);
    if (!dV.empty())
      for (int i = 0; i < l; ++i) {
        double s = 0;
        for (int j = 0; j < n; ++j) s += dO[static_cast<size_t>(j)] * M2.at(i, j);
        dV[static_cast<size_t>(i)] += s;
      }
    if (!dM.empty())
      for (int i = 0; i < l; ++i)
        for (int j = 0; j < n; ++j) dM[static_cast<size_t>(i) * n + j] += V2[i] * dO[static_cast<size_t>(j)];
  };
  return out;
}

NodeId Tape::mat_vec(NodeId m, NodeId v) {
  const Tensor& M = val(m);
  const Tensor& V = val(v);
  if (M.rank() != 2 || V.rank() != 1 || M.cols() != V.extent(0)) dim_fail("mat_vec", M, V);
  const int l = M.rows(), n = M.cols();
  Tensor out_t({l});
  for (int i = 0; i < l; ++i) {
    double s = 0;
    for (int j = 0; j < n; ++j) s += M.at(i, j) * V[j];
    out_t[i] = s;
  }
  NodeId out = push(std::move(out_t), tracked(m) || tracked(v));
  if (!tracked(out)) return out;
  nodes_.back().pull = [this, m, v, out, l, n] {
    const auto& dO = gbuf(out);
    const Tensor& M2 = val(m);
    const Tensor& V2 = val(v);
    auto& dM = gbuf(m);
    auto& dV = gbuf(v);
    if (!dM.empty())
      for (int i = 0; i < l; ++i)
        for (int j = 0; j < n; ++j) dM[static_cast<size_t>(i) * n + j] += dO[static_cast<size_t>(i)] * V2[j];
    if (!dV.empty())
      for (int j = 0; j < n; ++j) {
        double s = 0;
        for (int i = 0; i < l; ++i) s += dO[static_cast<size_t>(i)] * M2.at(i, j);
        dV[static_cast<size_t>(j)] += s;
      }
  };
  return out;
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  if (!A.same_shape(B)) dim_fail("add", A, B);
  Tensor C(A.shape());
  const int n = A.numel();
  for (int i = 0; i < n; ++i) C[i] = A[i] + B[i];
  NodeId out = push(std::move(C), tracked(a) || tracked(b));
  if (!tracked(out)) return out;
  nodes_.back().pull = [this, a, b, out, n] {
    const auto& dC = gbuf(out);
    auto& dA = gbuf(a);
    auto& dB = gbuf(b);
    if (!dA.empty())
      for (int i = 0; i < n; ++i) dA[static_cast<size_t>(i)] += dC[static_cast<size_t>(i)];
    if (!dB.empty())
      for (int i = 0; i < n; ++i) dB[static_cast<size_t>(i)] += dC[static_cast<size_t>(i)];
  };
  return out;
}

NodeId Tape::scale(NodeId a, double c) {
  const Tensor& A = val(a);
  Tensor C(A.shape());
  const int n = A.numel();
  for (int i = 0; i < n; ++i) C[i] = c * A[i];
  NodeId out = push(std::move(C), tracked(a));
  if (!tracked(out)) return out;
  nodes_.back().pull = [this, a, out, c, n] {
    const auto& dC = gbuf(out);
    auto& dA = gbuf(a);
    for (int i = 0; i < n; ++i) dA[static_cast<size_t>(i)] += c * dC[static_cast<size_t>(i)];
  };
  return out;
}

NodeId Tape::relu(NodeId a) {
  const Tensor& A = val(a);
  Tensor C(A.shape());
  const int n = A.numel();
  for (int i = 0; i < n; ++i) C[i] = A[i] > 0 ? A[i] : 0.0;
  NodeId out = push(std::move(C), tracked(a));
  if (!tracked(out)) return out;
  nodes_.back().pull = [this, a, out, n] {
    const auto& dC = gbuf(out);
    const Tensor& A2 = val(a);
    auto& dA = gbuf(a);
    // subgradient at 0 is 0
    for (int i = 0; i < n; ++i)
      if (A2[i] > 0) dA[static_cast<size_t>(i)] += dC[static_cast<size_t>(i)];
  };
  return out;
}

NodeId Tape::row_softmax(NodeId a) {
  const Tensor& A = val(a);
  const int n = A.extent(A.rank() - 1);
  if (n < 1) fail(ErrorKind::kDimension, "row_softmax: empty row");
  const int rows = A.numel() / n;
  Tensor C(A.shape());
  for (int r = 0; r < rows; ++r) {
    const double* x = A.data() + static_cast<size_t>(r) * n;
    double* y = C.data() + static_cast<size_t>(r) * n;
    double m = x[0];
    for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
    double sum = 0;
    for (int i = 0; i < n; ++i) {
      y[i] = std::exp(x[i] - m);
      sum += y[i];
    }
    for (int i = 0; i < n; ++i) y[i] /= sum;
  }
  NodeId out = push(std::move(C), tracked(a));
  if (!tracked(out)) return out;
  nodes_.back().pull = [this, a, out, rows, n] {
    const auto& dC = gbuf(out);
    const Tensor& Y = val(out);
    auto& dA = gbuf(a);
    for (int r = 0; r < rows; ++r) {
      const double* y = Y.data() + static_cast<size_t>(r) * n;
      const double* dy = dC.data() + static_cast<size_t>(r) * n;
      double dot = 0;
      for (int i = 0; i < n; ++i) dot += y[i] * dy[i];
      for (int i = 0; i < n; ++i) dA[static_cast<size_t>(r) * n + i] += y[i] * (dy[i] - dot);
    }
  };
  return out;
}

MaskedMax Tape::masked_rowwise_max(NodeId c, const std::vector<uint8_t>& row_mask) {
  const Tensor& C = val(c);
  if (C.rank() != 2) fail(ErrorKind::kDimension, "masked_rowwise_max: expected rank-2, got " + C.shape_string());
  const int rows = C.rows(), cols = C.cols();
  if (row_mask.size() != static_cast<size_t>(rows))
    fail(ErrorKind::kDimension, "masked_rowwise_max: mask length " + std::to_string(row_mask.size()) +
                                    " vs " + std::to_string(rows) + " rows");
  bool any = false;
  for (uint8_t m : row_mask) any = any || (m != 0);
  if (!any) fail(ErrorKind::kEmptyQuestion, "masked_rowwise_max: all rows masked (empty question)");

  Tensor vals({cols});
  std::vector<int> argrow(static_cast<size_t>(cols), -1);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) {
      if (!row_mask[static_cast<size_t>(i)]) continue;
      const double v = C.at(i, j);
      if (argrow[static_cast<size_t>(j)] < 0 || v > vals[j]) {
        vals[j] = v;
        argrow[static_cast<size_t>(j)] = i;
      }
    }
  }
  NodeId out = push(std::move(vals), tracked(c));
  if (tracked(out)) {
    std::vector<int> arg = argrow;
    nodes_.back().pull = [this, c, out, cols, arg = std::move(arg)] {
      const auto& dV = gbuf(out);
      auto& dC = gbuf(c);
      const int width = val(c).cols();
      for (int j = 0; j < cols; ++j)
        dC[static_cast<size_t>(arg[static_cast<size_t>(j)]) * width + j] += dV[static_cast<size_t>(j)];
    };
  }
  return {out, std::move(argrow)};
}

NodeId Tape::embed_rows(NodeId table, const std::vector<int>& ids) {
  const Tensor& E = val(table);
  if (E.rank() != 2) fail(ErrorKind::kDimension, "embed_rows: table must be rank-2");
  const int n = E.cols();
  const int len = static_cast<int>(ids.size());
  Tensor V({len, n});
  for (int j = 0; j < len; ++j) {
    const int id = ids[static_cast<size_t>(j)];
    if (id >= E.rows())
      fail(ErrorKind::kData, "embed_rows: id " + std::to_string(id) + " out of range for table " + E.shape_string());
    if (id < 0) continue;  // padding embeds to the zero vector
    for (int k = 0; k < n; ++k) V.at(j, k) = E.at(id, k);
  }
  NodeId out = push(std::move(V), tracked(table));
  if (!tracked(out)) return out;
  std::vector<int> ids_copy = ids;
  nodes_.back().pull = [this, table, out, n, len, ids = std::move(ids_copy)] {
    const auto& dV = gbuf(out);
    auto& dE = gbuf(table);
    for (int j = 0; j < len; ++j) {
      const int id = ids[static_cast<size_t>(j)];
      if (id < 0) continue;  // padding row stays frozen
      for (int k = 0; k < n; ++k)
        dE[static_cast<size_t>(id) * n + k] += dV[static_cast<size_t>(j) * n + k];
    }
  };
  return out;
}

NodeId Tape::mean_rows(NodeId m) {
  const Tensor& M = val(m);
  if (M.rank() != 2) fail(ErrorKind::kDimension, "mean_rows: expected rank-2, got " + M.shape_string());
  const int l = M.rows(), n = M.cols();
  Tensor out_t({n});
  for (int i = 0; i < l; ++i)
    for (int j = 0; j < n; ++j) out_t[j] += M.at(i, j);
  for (int j = 0; j < n; ++j) out_t[j] /= l;
  NodeId out = push(std::move(out_t), tracked(m));
  if (!tracked(out)) return out;
  nodes_.back().pull = [this, m, out, l, n] {
    const auto& dO = gbuf(out);
    auto& dM = gbuf(m);
    for (int i = 0; i < l; ++i)
      for (int j = 0; j < n; ++j) dM[static_cast<size_t>(i) * n + j] += dO[static_cast<size_t>(j)] / l;
  };
  return out;
}

NodeId Tape::concat(NodeId a, NodeId b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  if (A.rank() != 1 || B.rank() != 1) dim_fail("concat", A, B);
  const int na = A.extent(0), nb = B.extent(0);
  Tensor C({na + nb});
  for (int i = 0; i < na; ++i) C[i] = A[i];
  for (int i = 0; i < nb; ++i) C[na + i] = B[i];
  NodeId out = push(std::move(C), tracked(a) || tracked(b));
  if (!tracked(out)) return out;
  nodes_.back().pull = [this, a, b, out, na, nb] {
    const auto& dC = gbuf(out);
    auto& dA = gbuf(a);
    auto& dB = gbuf(b);
    if (!dA.empty())
      for (int i = 0; i < na; ++i) dA[static_cast<size_t>(i)] += dC[static_cast<size_t>(i)];
    if (!dB.empty())
      for (int i = 0; i < nb; ++i) dB[static_cast<size_t>(i)] += dC[static_cast<size_t>(na + i)];
  };
  return out;
}

NodeId Tape::dropout(NodeId a, double rate, Rng& rng) {
  if (rate < 0 || rate >= 1) fail(ErrorKind::kUsage, "dropout rate must be in [0,1)");
  const Tensor& A = val(a);
  const int n = A.numel();
  std::vector<double> mask(static_cast<size_t>(n));
  const double keep_scale = 1.0 / (1.0 - rate);
  for (int i = 0; i < n; ++i) mask[static_cast<size_t>(i)] = rng.next_double() < rate ? 0.0 : keep_scale;
  Tensor C(A.shape());
  for (int i = 0; i < n; ++i) C[i] = A[i] * mask[static_cast<size_t>(i)];
  NodeId out = push(std::move(C), tracked(a));
  if (!tracked(out)) return out;
  nodes_.back().pull = [this, a, out, n, mask = std::move(mask)] {
    const auto& dC = gbuf(out);
    auto& dA = gbuf(a);
    for (int i = 0; i < n; ++i) dA[static_cast<size_t>(i)] += dC[static_cast<size_t>(i)] * mask[static_cast<size_t>(i)];
  };
  return out;
}

NodeId Tape::cross_entropy_with_logits(NodeId logits, int target) {
  const Tensor& X = val(logits);
  if (X.rank() != 1) fail(ErrorKind::kDimension, "cross_entropy: logits must be rank-1");
  const int k = X.extent(0);
  if (target < 0 || target >= k)
    fail(ErrorKind::kData, "cross_entropy: answer class " + std::to_string(target) + " out of range [0," +
                               std::to_string(k) + ")");
  double m = X[0];
  for (int i = 1; i < k; ++i) m = std::max(m, X[i]);
  double sum = 0;
  for (int i = 0; i < k; ++i) sum += std::exp(X[i] - m);
  const double loss = m + std::log(sum) - X[target];
  NodeId out = push(Tensor::scalar(loss), tracked(logits));
  if (!tracked(out)) return out;
  nodes_.back().pull = [this, logits, out, k, target, m, sum] {
    const double dl = gbuf(out)[0];
    const Tensor& X2 = val(logits);
    auto& dX = gbuf(logits);
    for (int i = 0; i < k; ++i) {
      const double p = std::exp(X2[i] - m) / sum;
      dX[static_cast<size_t>(i)] += dl * (p - (i == target ? 1.0 : 0.0));
    }
  };
  return out;
}

NodeId Tape::conv2d_grid(NodeId kernel, NodeId bias, NodeId image, const ConvGeom& g) {
  const Tensor& K = val(kernel);  // [C, in, k, k]
  const Tensor& B = val(bias);    // [C]
  const Tensor& I = val(image);   // [in, H, W]
  if (K.rank() != 4 || K.extent(1) != g.in_channels || K.extent(2) != g.kernel || K.extent(3) != g.kernel)
    fail(ErrorKind::kDimension, "conv2d_grid: kernel shape " + K.shape_string() + " does not match geometry");
  if (I.rank() != 3 || I.extent(0) != g.in_channels)
    fail(ErrorKind::kDimension, "conv2d_grid: image shape " + I.shape_string() + " does not match geometry");
  const int C = K.extent(0), H = I.extent(1), W = I.extent(2);
  if (B.rank() != 1 || B.extent(0) != C) fail(ErrorKind::kDimension, "conv2d_grid: bias shape mismatch");
  const int last_y = (g.out_rows - 1) * g.stride_y + g.kernel;
  const int last_x = (g.out_cols - 1) * g.stride_x + g.kernel;
  if (last_y > H || last_x > W)
    fail(ErrorKind::kDimension, "conv2d_grid: geometry overruns image (" + std::to_string(last_y) + "x" +
                                    std::to_string(last_x) + " vs " + std::to_string(H) + "x" + std::to_string(W) + ")");

  const int L = g.out_rows * g.out_cols;
  Tensor out_t({L, C});
  auto kidx = [&](int c, int ic, int ky, int kx) {
    return ((static_cast<size_t>(c) * g.in_channels + ic) * g.kernel + ky) * g.kernel + kx;
  };
  auto iidx = [&](int ic, int y, int x) { return (static_cast<size_t>(ic) * H + y) * W + x; };
  for (int gy = 0; gy < g.out_rows; ++gy)
    for (int gx = 0; gx < g.out_cols; ++gx) {
      const int loc = gy * g.out_cols + gx;
      const int y0 = gy * g.stride_y, x0 = gx * g.stride_x;
      for (int c = 0; c < C; ++c) {
        double s = B[c];
        for (int ic = 0; ic < g.in_channels; ++ic)
          for (int ky = 0; ky < g.kernel; ++ky)
            for (int kx = 0; kx < g.kernel; ++kx)
              s += K[static_cast<int>(kidx(c, ic, ky, kx))] * I[static_cast<int>(iidx(ic, y0 + ky, x0 + kx))];
        out_t.at(loc, c) = s;
      }
    }
  NodeId out = push(std::move(out_t), tracked(kernel) || tracked(bias) || tracked(image));
  if (!tracked(out)) return out;
  ConvGeom geom = g;
  nodes_.back().pull = [this, kernel, bias, image, out, geom, C, H, W] {
    const auto& dO = gbuf(out);
    const Tensor& K2 = val(kernel);
    const Tensor& I2 = val(image);
    auto& dK = gbuf(kernel);
    auto& dB = gbuf(bias);
    auto& dI = gbuf(image);
    auto kidx = [&](int c, int ic, int ky, int kx) {
      return ((static_cast<size_t>(c) * geom.in_channels + ic) * geom.kernel + ky) * geom.kernel + kx;
    };
    auto iidx = [&](int ic, int y, int x) { return (static_cast<size_t>(ic) * H + y) * W + x; };
    for (int gy = 0; gy < geom.out_rows; ++gy)
      for (int gx = 0; gx < geom.out_cols; ++gx) {
        const int loc = gy * geom.out_cols + gx;
        const int y0 = gy * geom.stride_y, x0 = gx * geom.stride_x;
        for (int c = 0; c < C; ++c) {
          const double d = dO[static_cast<size_t>(loc) * C + c];
          if (!dB.empty()) dB[static_cast<size_t>(c)] += d;
          for (int ic = 0; ic < geom.in_channels; ++ic)
            for (int ky = 0; ky < geom.kernel; ++ky)
              for (int kx = 0; kx < geom.kernel; ++kx) {
                if (!dK.empty()) dK[kidx(c, ic, ky, kx)] += d * I2[static_cast<int>(iidx(ic, y0 + ky, x0 + kx))];
                if (!dI.empty()) dI[iidx(ic, y0 + ky, x0 + kx)] += d * K2[static_cast<int>(kidx(c, ic, ky, kx))];
              }
        }
      }
  };
  return out;
}

void Tape::backward(NodeId loss) {
  Node& ln = nodes_[static_cast<size_t>(loss)];
  if (val(loss).numel() != 1) fail(ErrorKind::kUsage, "backward: loss must be scalar");
  if (ln.grad.empty()) fail(ErrorKind::kUsage, "backward: loss does not track gradients");
  ln.grad[0] = 1.0;
  for (size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].pull) nodes_[i].pull();
  }
  // hand leaf gradients to their parameters
  for (Node& n : nodes_) {
    if (!n.bound) continue;
    n.bound->ensure_grad();
    auto& g = n.bound->grad();
    for (size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
  }
}

}  // namespace smem
