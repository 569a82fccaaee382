#include "flagcns/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flagcns/common.hpp"

namespace flagcns::ad {

Act act_from_index(int i) {
  switch (i) {
    case 0: return Act::kSigmoid;
    case 1: return Act::kTanh;
    case 2: return Act::kRelu;
    case 3: return Act::kSoftmaxRows;
    case 4: return Act::kIdentity;
  }
  throw ConfigError("activation index out of range: " + std::to_string(i));
}

std::string act_name(Act a) {
  switch (a) {
    case Act::kSigmoid: return "sigmoid";
    case Act::kTanh: return "tanh";
    case Act::kRelu: return "relu";
    case Act::kSoftmaxRows: return "softmax_rows";
    case Act::kIdentity: return "identity";
  }
  return "?";
}

namespace {
enum class Op {
  kParam,
  kConst,
  kMatmul,
  kSpmm,
  kAct,
  kLeakyRelu,
  kAdd,
  kAddBias,
  kScale,
  kHadamard,
  kSumAll,
  kMeanStack,
  kConcatCols,
  kGather,
  kSegmentSoftmax,
  kScatterWeighted,
  kGinCombine,
  kMaskedCE,
};

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

struct Tape::Node {
  Op op;
  Act act = Act::kIdentity;
  double c = 0.0;                         // scale factor / leaky slope
  NodeId a = -1, b = -1, e = -1;          // parents
  std::vector<NodeId> list;               // mean_stack parents
  const SparseMatrix* sparse = nullptr;   // spmm operand (caller-owned)
  std::vector<int64_t> idx;               // gather/segment/scatter/mask indices
  std::vector<int> labels;                // cross-entropy labels
  int64_t n = 0;                          // segment / output-row count
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
};

Tape::Tape() = default;
Tape::~Tape() = default;
Tape::Tape(Tape&&) noexcept = default;
Tape& Tape::operator=(Tape&&) noexcept = default;

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Tensor& Tape::value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }

const Tensor& Tape::grad(NodeId id) const {
  if (!ran_backward_) throw NumericError("grad() before backward()");
  return nodes_[static_cast<size_t>(id)].grad;
}

NodeId Tape::param(Tensor value) {
  Node n{};
  n.op = Op::kParam;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

NodeId Tape::constant(Tensor value) {
  Node n{};
  n.op = Op::kConst;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows())
    throw DimensionError("matmul dimension mismatch");
  int64_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor out({m, n});
  const double* pa = A.data();
  const double* pb = B.data();
  double* po = out.data();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t kk = 0; kk < k; ++kk) {
      double aik = pa[i * k + kk];
      if (aik == 0.0) continue;
      const double* brow = pb + kk * n;
      double* orow = po + i * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  Node nd{};
  nd.op = Op::kMatmul;
  nd.a = a;
  nd.b = b;
  nd.value = std::move(out);
  nd.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(nd));
}

NodeId Tape::spmm(const SparseMatrix* s, NodeId x) {
  const Tensor& X = value(x);
  if (X.rank() != 2 || s->cols != X.rows()) throw DimensionError("spmm dimension mismatch");
  int64_t f = X.cols();
  Tensor out({s->rows, f});
  const double* px = X.data();
  double* po = out.data();
  for (int64_t r = 0; r < s->rows; ++r) {
    double* orow = po + r * f;
    for (int64_t k = s->row_ptr[r]; k < s->row_ptr[r + 1]; ++k) {
      double w = s->values[k];
      const double* xrow = px + s->col_idx[k] * f;
      for (int64_t j = 0; j < f; ++j) orow[j] += w * xrow[j];
    }
  }
  Node nd{};
  nd.op = Op::kSpmm;
  nd.a = x;
  nd.sparse = s;
  nd.value = std::move(out);
  nd.requires_grad = nodes_[x].requires_grad;
  return push(std::move(nd));
}

NodeId Tape::activation(NodeId x, Act kind) {
  const Tensor& X = value(x);
  if (kind == Act::kSoftmaxRows && X.rank() != 2)
    throw DimensionError("softmax_rows requires a rank-2 input");
  Tensor out = X;
  switch (kind) {
    case Act::kSigmoid:
      for (auto& v : out.values()) v = stable_sigmoid(v);
      break;
    case Act::kTanh:
      for (auto& v : out.values()) v = std::tanh(v);
      break;
    case Act::kRelu:
      for (auto& v : out.values()) v = v > 0 ? v : 0.0;
      break;
    case Act::kSoftmaxRows: {
      int64_t rows = X.rows(), cols = X.cols();
      for (int64_t r = 0; r < rows; ++r) {
        double* row = out.data() + r * cols;
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t j = 0; j < cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0;
        for (int64_t j = 0; j < cols; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += row[j];
        }
        for (int64_t j = 0; j < cols; ++j) row[j] /= sum;
      }
      break;
    }
    case Act::kIdentity:
      break;
  }
  Node nd{};
  nd.op = Op::kAct;
  nd.act = kind;
  nd.a = x;
  nd.value = std::move(out);
  nd.requires_grad = nodes_[x].requires_grad;
  return push(std::move(nd));
}

NodeId Tape::leaky_relu(NodeId x, double slope) {
  Tensor out = value(x);
  for (auto& v : out.values())
    if (v < 0) v *= slope;
  Node nd{};
  nd.op = Op::kLeakyRelu;
  nd.c = slope;
  nd.a = x;
  nd.value = std::move(out);
  nd.requires_grad = nodes_[x].requires_grad;
  return push(std::move(nd));
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!A.same_shape(B)) throw DimensionError("add shape mismatch");
  Tensor out = A;
  for (int64_t i = 0; i < out.numel(); ++i) out.at(i) += B.at(i);
  Node nd{};
  nd.op = Op::kAdd;
  nd.a = a;
  nd.b = b;
  nd.value = std::move(out);
  nd.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(nd));
}

NodeId Tape::add_bias(NodeId x, NodeId bias) {
  const Tensor& X = value(x);
  const Tensor& B = value(bias);
  if (X.rank() != 2 || B.rank() != 1 || B.dim(0) != X.cols())
    throw DimensionError("add_bias shape mismatch");
  Tensor out = X;
  int64_t rows = X.rows(), cols = X.cols();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < cols; ++j) out.at(r, j) += B.at(j);
  Node nd{};
  nd.op = Op::kAddBias;
  nd.a = x;
  nd.b = bias;
  nd.value = std::move(out);
  nd.requires_grad = nodes_[x].requires_grad || nodes_[bias].requires_grad;
  return push(std::move(nd));
}

NodeId Tape::scale(NodeId x, double c) {
  Tensor out = value(x);
  for (auto& v : out.values()) v *= c;
  Node nd{};
  nd.op = Op::kScale;
  nd.c = c;
  nd.a = x;
  nd.value = std::move(out);
  nd.requires_grad = nodes_[x].requires_grad;
  return push(std::move(nd));
}

NodeId Tape::hadamard(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!A.same_shape(B)) throw DimensionError("hadamard shape mismatch");
  Tensor out = A;
  for (int64_t i = 0; i < out.numel(); ++i) out.at(i) *= B.at(i);
  Node nd{};
  nd.op = Op::kHadamard;
  nd.a = a;
  nd.b = b;
  nd.value = std::move(out);
  nd.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(nd));
}

NodeId Tape::sum_all(NodeId x) {
  double s = 0;
  for (double v : value(x).values()) s += v;
  Node nd{};
  nd.op = Op::kSumAll;
  nd.a = x;
  nd.value = Tensor({1}, {s});
  nd.requires_grad = nodes_[x].requires_grad;
  return push(std::move(nd));
}

NodeId Tape::mean_stack(const std::vector<NodeId>& xs) {
  if (xs.empty()) throw DimensionError("mean_stack of an empty list");
  const Tensor& first = value(xs[0]);
  Tensor out = first;
  for (size_t i = 1; i < xs.size(); ++i) {
    const Tensor& t = value(xs[i]);
    if (!t.same_shape(first)) throw DimensionError("mean_stack shape mismatch");
    for (int64_t j = 0; j < out.numel(); ++j) out.at(j) += t.at(j);
  }
  double inv = 1.0 / static_cast<double>(xs.size());
  for (auto& v : out.values()) v *= inv;
  Node nd{};
  nd.op = Op::kMeanStack;
  nd.list = xs;
  nd.value = std::move(out);
  for (NodeId id : xs) nd.requires_grad = nd.requires_grad || nodes_[id].requires_grad;
  return push(std::move(nd));
}

NodeId Tape::concat_cols(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.rank() != 2 || B.rank() != 2 || A.rows() != B.rows())
    throw DimensionError("concat_cols row mismatch");
  int64_t rows = A.rows(), ca = A.cols(), cb = B.cols();
  Tensor out({rows, ca + cb});
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t j = 0; j < ca; ++j) out.at(r, j) = A.at(r, j);
    for (int64_t j = 0; j < cb; ++j) out.at(r, ca + j) = B.at(r, j);
  }
  Node nd{};
  nd.op = Op::kConcatCols;
  nd.a = a;
  nd.b = b;
  nd.value = std::move(out);
  nd.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(nd));
}

NodeId Tape::gather_rows(NodeId x, std::vector<int64_t> idx) {
  const Tensor& X = value(x);
  if (X.rank() != 2) throw DimensionError("gather_rows requires rank-2 input");
  int64_t f = X.cols();
  Tensor out({static_cast<int64_t>(idx.size()), f});
  for (size_t e = 0; e < idx.size(); ++e) {
    if (idx[e] < 0 || idx[e] >= X.rows()) throw DimensionError("gather index out of range");
    const double* src = X.data() + idx[e] * f;
    std::copy(src, src + f, out.data() + static_cast<int64_t>(e) * f);
  }
  Node nd{};
  nd.op = Op::kGather;
  nd.a = x;
  nd.idx = std::move(idx);
  nd.value = std::move(out);
  nd.requires_grad = nodes_[x].requires_grad;
  return push(std::move(nd));
}

NodeId Tape::segment_softmax(NodeId scores, std::vector<int64_t> segment, int64_t num_segments) {
  const Tensor& S = value(scores);
  if (S.rank() != 2 || S.cols() != 1 || S.rows() != static_cast<int64_t>(segment.size()))
    throw DimensionError("segment_softmax shape mismatch");
  int64_t e = S.rows();
  std::vector<double> mx(static_cast<size_t>(num_segments),
                         -std::numeric_limits<double>::infinity());
  for (int64_t i = 0; i < e; ++i) {
    int64_t s = segment[static_cast<size_t>(i)];
    if (s < 0 || s >= num_segments) throw DimensionError("segment id out of range");
    mx[s] = std::max(mx[s], S.at(i));
  }
  Tensor out({e, 1});
  std::vector<double> sum(static_cast<size_t>(num_segments), 0.0);
  for (int64_t i = 0; i < e; ++i) {
    double v = std::exp(S.at(i) - mx[segment[static_cast<size_t>(i)]]);
    out.at(i) = v;
    sum[segment[static_cast<size_t>(i)]] += v;
  }
  for (int64_t i = 0; i < e; ++i) out.at(i) /= sum[segment[static_cast<size_t>(i)]];
  Node nd{};
  nd.op = Op::kSegmentSoftmax;
  nd.a = scores;
  nd.idx = std::move(segment);
  nd.n = num_segments;
  nd.value = std::move(out);
  nd.requires_grad = nodes_[scores].requires_grad;
  return push(std::move(nd));
}

NodeId Tape::scatter_weighted_rows(NodeId alpha, NodeId vals, std::vector<int64_t> dst,
                                   int64_t num_rows) {
  const Tensor& A = value(alpha);
  const Tensor& V = value(vals);
  if (A.rank() != 2 || A.cols() != 1 || V.rank() != 2 || A.rows() != V.rows() ||
      A.rows() != static_cast<int64_t>(dst.size()))
    throw DimensionError("scatter_weighted_rows shape mismatch");
  int64_t f = V.cols();
  Tensor out({num_rows, f});
  for (size_t e = 0; e < dst.size(); ++e) {
    if (dst[e] < 0 || dst[e] >= num_rows) throw DimensionError("scatter index out of range");
    double w = A.at(static_cast<int64_t>(e));
    const double* src = V.data() + static_cast<int64_t>(e) * f;
    double* o = out.data() + dst[e] * f;
    for (int64_t j = 0; j < f; ++j) o[j] += w * src[j];
  }
  Node nd{};
  nd.op = Op::kScatterWeighted;
  nd.a = alpha;
  nd.b = vals;
  nd.idx = std::move(dst);
  nd.n = num_rows;
  nd.value = std::move(out);
  nd.requires_grad = nodes_[alpha].requires_grad || nodes_[vals].requires_grad;
  return push(std::move(nd));
}

NodeId Tape::gin_combine(NodeId x, NodeId neigh, NodeId eps) {
  const Tensor& X = value(x);
  const Tensor& N = value(neigh);
  const Tensor& E = value(eps);
  if (!X.same_shape(N) || E.numel() != 1) throw DimensionError("gin_combine shape mismatch");
  double scale = 1.0 + E.at(0);
  Tensor out = X;
  for (int64_t i = 0; i < out.numel(); ++i) out.at(i) = scale * X.at(i) + N.at(i);
  Node nd{};
  nd.op = Op::kGinCombine;
  nd.a = x;
  nd.b = neigh;
  nd.e = eps;
  nd.value = std::move(out);
  nd.requires_grad =
      nodes_[x].requires_grad || nodes_[neigh].requires_grad || nodes_[eps].requires_grad;
  return push(std::move(nd));
}

NodeId Tape::masked_cross_entropy(NodeId logits, std::vector<int> labels,
                                  std::vector<int64_t> mask) {
  const Tensor& L = value(logits);
  if (L.rank() != 2) throw DimensionError("masked_cross_entropy requires rank-2 logits");
  if (static_cast<int64_t>(labels.size()) != L.rows())
    throw DimensionError("label count does not match logits rows");
  if (mask.empty()) throw DimensionError("masked_cross_entropy with an empty mask");
  int64_t c = L.cols();
  for (int v : labels)
    if (v < 0 || v >= c) throw DimensionError("label out of class range");
  double total = 0;
  for (int64_t i : mask) {
    if (i < 0 || i >= L.rows()) throw DimensionError("mask index out of range");
    const double* row = L.data() + i * c;
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0;
    for (int64_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
    double lse = mx + std::log(sum);
    total += lse - row[labels[static_cast<size_t>(i)]];
  }
  total /= static_cast<double>(mask.size());
  Node nd{};
  nd.op = Op::kMaskedCE;
  nd.a = logits;
  nd.labels = std::move(labels);
  nd.idx = std::move(mask);
  nd.value = Tensor({1}, {total});
  nd.requires_grad = nodes_[logits].requires_grad;
  return push(std::move(nd));
}

void Tape::backward(NodeId loss) {
  Node& root = nodes_[static_cast<size_t>(loss)];
  if (root.value.numel() != 1) throw DimensionError("backward from a non-scalar node");
  for (const Node& n : nodes_)
    if (!n.value.all_finite())
      throw NumericError("non-finite value in forward pass");
  for (Node& n : nodes_) n.grad = Tensor(n.value.shape());
  root.grad.at(0) = 1.0;
  ran_backward_ = true;

  for (int64_t id = loss; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) continue;
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::kParam:
      case Op::kConst:
        break;
      case Op::kMatmul: {
        Node& na = nodes_[static_cast<size_t>(n.a)];
        Node& nb = nodes_[static_cast<size_t>(n.b)];
        int64_t m = na.value.rows(), k = na.value.cols(), cn = nb.value.cols();
        if (na.requires_grad) {
          // dA = g * B^T
          for (int64_t i = 0; i < m; ++i)
            for (int64_t kk = 0; kk < k; ++kk) {
              const double* grow = g.data() + i * cn;
              const double* brow = nb.value.data() + kk * cn;
              double acc = 0;
              for (int64_t j = 0; j < cn; ++j) acc += grow[j] * brow[j];
              na.grad.at(i, kk) += acc;
            }
        }
        if (nb.requires_grad) {
          // dB = A^T * g
          for (int64_t i = 0; i < m; ++i)
            for (int64_t kk = 0; kk < k; ++kk) {
              double aik = na.value.at(i, kk);
              if (aik == 0.0) continue;
              const double* grow = g.data() + i * cn;
              double* brow = nb.grad.data() + kk * cn;
              for (int64_t j = 0; j < cn; ++j) brow[j] += aik * grow[j];
            }
        }
        break;
      }
      case Op::kSpmm: {
        Node& nx = nodes_[static_cast<size_t>(n.a)];
        if (!nx.requires_grad) break;
        const SparseMatrix* s = n.sparse;
        int64_t f = nx.value.cols();
        for (int64_t r = 0; r < s->rows; ++r) {
          const double* grow = g.data() + r * f;
          for (int64_t k = s->row_ptr[r]; k < s->row_ptr[r + 1]; ++k) {
            double w = s->values[k];
            double* xrow = nx.grad.data() + s->col_idx[k] * f;
            for (int64_t j = 0; j < f; ++j) xrow[j] += w * grow[j];
          }
        }
        break;
      }
      case Op::kAct: {
        Node& nx = nodes_[static_cast<size_t>(n.a)];
        if (!nx.requires_grad) break;
        switch (n.act) {
          case Act::kSigmoid:
            for (int64_t i = 0; i < g.numel(); ++i) {
              double y = n.value.at(i);
              nx.grad.at(i) += g.at(i) * y * (1.0 - y);
            }
            break;
          case Act::kTanh:
            for (int64_t i = 0; i < g.numel(); ++i) {
              double y = n.value.at(i);
              nx.grad.at(i) += g.at(i) * (1.0 - y * y);
            }
            break;
          case Act::kRelu:
            // subgradient at 0 taken as 0
            for (int64_t i = 0; i < g.numel(); ++i)
              if (nx.value.at(i) > 0) nx.grad.at(i) += g.at(i);
            break;
          case Act::kSoftmaxRows: {
            int64_t rows = n.value.rows(), cols = n.value.cols();
            for (int64_t r = 0; r < rows; ++r) {
              double dot = 0;
              for (int64_t j = 0; j < cols; ++j) dot += g.at(r, j) * n.value.at(r, j);
              for (int64_t j = 0; j < cols; ++j)
                nx.grad.at(r, j) += n.value.at(r, j) * (g.at(r, j) - dot);
            }
            break;
          }
          case Act::kIdentity:
            for (int64_t i = 0; i < g.numel(); ++i) nx.grad.at(i) += g.at(i);
            break;
        }
        break;
      }
      case Op::kLeakyRelu: {
        Node& nx = nodes_[static_cast<size_t>(n.a)];
        if (!nx.requires_grad) break;
        for (int64_t i = 0; i < g.numel(); ++i)
          nx.grad.at(i) += g.at(i) * (nx.value.at(i) > 0 ? 1.0 : n.c);
        break;
      }
      case Op::kAdd: {
        Node& na = nodes_[static_cast<size_t>(n.a)];
        Node& nb = nodes_[static_cast<size_t>(n.b)];
        if (na.requires_grad)
          for (int64_t i = 0; i < g.numel(); ++i) na.grad.at(i) += g.at(i);
        if (nb.requires_grad)
          for (int64_t i = 0; i < g.numel(); ++i) nb.grad.at(i) += g.at(i);
        break;
      }
      case Op::kAddBias: {
        Node& nx = nodes_[static_cast<size_t>(n.a)];
        Node& nb = nodes_[static_cast<size_t>(n.b)];
        int64_t rows = n.value.rows(), cols = n.value.cols();
        if (nx.requires_grad)
          for (int64_t i = 0; i < g.numel(); ++i) nx.grad.at(i) += g.at(i);
        if (nb.requires_grad)
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < cols; ++j) nb.grad.at(j) += g.at(r, j);
        break;
      }
      case Op::kScale: {
        Node& nx = nodes_[static_cast<size_t>(n.a)];
        if (!nx.requires_grad) break;
        for (int64_t i = 0; i < g.numel(); ++i) nx.grad.at(i) += n.c * g.at(i);
        break;
      }
      case Op::kHadamard: {
        Node& na = nodes_[static_cast<size_t>(n.a)];
        Node& nb = nodes_[static_cast<size_t>(n.b)];
        if (na.requires_grad)
          for (int64_t i = 0; i < g.numel(); ++i) na.grad.at(i) += g.at(i) * nb.value.at(i);
        if (nb.requires_grad)
          for (int64_t i = 0; i < g.numel(); ++i) nb.grad.at(i) += g.at(i) * na.value.at(i);
        break;
      }
      case Op::kSumAll: {
        Node& nx = nodes_[static_cast<size_t>(n.a)];
        if (!nx.requires_grad) break;
        double gv = g.at(0);
        for (int64_t i = 0; i < nx.grad.numel(); ++i) nx.grad.at(i) += gv;
        break;
      }
      case Op::kMeanStack: {
        double inv = 1.0 / static_cast<double>(n.list.size());
        for (NodeId pid : n.list) {
          Node& np = nodes_[static_cast<size_t>(pid)];
          if (!np.requires_grad) continue;
          for (int64_t i = 0; i < g.numel(); ++i) np.grad.at(i) += inv * g.at(i);
        }
        break;
      }
      case Op::kConcatCols: {
        Node& na = nodes_[static_cast<size_t>(n.a)];
        Node& nb = nodes_[static_cast<size_t>(n.b)];
        int64_t rows = n.value.rows(), ca = na.value.cols(), cb = nb.value.cols();
        if (na.requires_grad)
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < ca; ++j) na.grad.at(r, j) += g.at(r, j);
        if (nb.requires_grad)
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < cb; ++j) nb.grad.at(r, j) += g.at(r, ca + j);
        break;
      }
      case Op::kGather: {
        Node& nx = nodes_[static_cast<size_t>(n.a)];
        if (!nx.requires_grad) break;
        int64_t f = nx.value.cols();
        for (size_t e = 0; e < n.idx.size(); ++e) {
          const double* grow = g.data() + static_cast<int64_t>(e) * f;
          double* xrow = nx.grad.data() + n.idx[e] * f;
          for (int64_t j = 0; j < f; ++j) xrow[j] += grow[j];
        }
        break;
      }
      case Op::kSegmentSoftmax: {
        Node& nx = nodes_[static_cast<size_t>(n.a)];
        if (!nx.requires_grad) break;
        std::vector<double> dot(static_cast<size_t>(n.n), 0.0);
        int64_t e = n.value.rows();
        for (int64_t i = 0; i < e; ++i)
          dot[n.idx[static_cast<size_t>(i)]] += g.at(i) * n.value.at(i);
        for (int64_t i = 0; i < e; ++i)
          nx.grad.at(i) += n.value.at(i) * (g.at(i) - dot[n.idx[static_cast<size_t>(i)]]);
        break;
      }
      case Op::kScatterWeighted: {
        Node& na = nodes_[static_cast<size_t>(n.a)];
        Node& nv = nodes_[static_cast<size_t>(n.b)];
        int64_t f = nv.value.cols();
        for (size_t e = 0; e < n.idx.size(); ++e) {
          const double* grow = g.data() + n.idx[e] * f;
          const double* vrow = nv.value.data() + static_cast<int64_t>(e) * f;
          if (na.requires_grad) {
            double acc = 0;
            for (int64_t j = 0; j < f; ++j) acc += grow[j] * vrow[j];
            na.grad.at(static_cast<int64_t>(e)) += acc;
          }
          if (nv.requires_grad) {
            double w = na.value.at(static_cast<int64_t>(e));
            double* dv = nv.grad.data() + static_cast<int64_t>(e) * f;
            for (int64_t j = 0; j < f; ++j) dv[j] += w * grow[j];
          }
        }
        break;
      }
      case Op::kGinCombine: {
        Node& nx = nodes_[static_cast<size_t>(n.a)];
        Node& nn = nodes_[static_cast<size_t>(n.b)];
        Node& ne = nodes_[static_cast<size_t>(n.e)];
        double scale = 1.0 + ne.value.at(0);
        if (nx.requires_grad)
          for (int64_t i = 0; i < g.numel(); ++i) nx.grad.at(i) += scale * g.at(i);
        if (nn.requires_grad)
          for (int64_t i = 0; i < g.numel(); ++i) nn.grad.at(i) += g.at(i);
        if (ne.requires_grad) {
          double acc = 0;
          for (int64_t i = 0; i < g.numel(); ++i) acc += g.at(i) * nx.value.at(i);
          ne.grad.at(0) += acc;
        }
        break;
      }
      case Op::kMaskedCE: {
        Node& nl = nodes_[static_cast<size_t>(n.a)];
        if (!nl.requires_grad) break;
        int64_t c = nl.value.cols();
        double gv = g.at(0) / static_cast<double>(n.idx.size());
        for (int64_t i : n.idx) {
          const double* row = nl.value.data() + i * c;
          double mx = -std::numeric_limits<double>::infinity();
          for (int64_t j = 0; j < c; ++j) mx = std::max(mx, row[j]);
          double sum = 0;
          for (int64_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
          double* grow = nl.grad.data() + i * c;
          for (int64_t j = 0; j < c; ++j) {
            double p = std::exp(row[j] - mx) / sum;
            grow[j] += gv * (p - (n.labels[static_cast<size_t>(i)] == j ? 1.0 : 0.0));
          }
        }
        break;
      }
    }
  }
}

void sgd_step(Tensor& params, const Tensor& grad, double lr) {
  if (!params.same_shape(grad)) throw DimensionError("sgd_step shape mismatch");
  for (int64_t i = 0; i < params.numel(); ++i) params.at(i) -= lr * grad.at(i);
}

void sgd_step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
  if (params.size() != grad.size()) throw DimensionError("sgd_step size mismatch");
  for (size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
}

Tensor glorot_init(int64_t fan_in, int64_t fan_out, std::vector<int64_t> shape, Rng& rng) {
  double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-s, s);
  return t;
}

}  // namespace flagcns::ad
