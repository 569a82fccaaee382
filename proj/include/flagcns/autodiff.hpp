#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flagcns/rng.hpp"
#include "flagcns/tensor.hpp"

namespace flagcns::ad {

enum class Act { kSigmoid, kTanh, kRelu, kSoftmaxRows, kIdentity };

Act act_from_index(int i);          // Table-ordered: sigmoid, tanh, relu, softmax, identity
std::string act_name(Act);

using NodeId = int32_t;

// Reverse-mode tape. Forward values are computed eagerly at op creation, so
// creation order is a topological order and backward() is a single reverse
// sweep. One tape per evaluation; tapes are independent and movable across
// threads.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(Tape&&) noexcept;
  Tape& operator=(Tape&&) noexcept;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  NodeId param(Tensor value);     // differentiable leaf
  NodeId constant(Tensor value);  // non-differentiable leaf

  // Linear algebra.
  NodeId matmul(NodeId a, NodeId b);
  // Sparse-dense product; `s` must outlive the tape (shard contexts own them).
  NodeId spmm(const SparseMatrix* s, NodeId x);

  // Elementwise / structural.
  NodeId activation(NodeId x, Act kind);
  NodeId leaky_relu(NodeId x, double slope);
  NodeId add(NodeId a, NodeId b);
  NodeId add_bias(NodeId x, NodeId bias);  // bias is rank-1 [cols], broadcast over rows
  NodeId scale(NodeId x, double c);
  NodeId hadamard(NodeId a, NodeId b);
  NodeId sum_all(NodeId x);  // scalar [1]
  NodeId mean_stack(const std::vector<NodeId>& xs);
  NodeId concat_cols(NodeId a, NodeId b);

  // Graph-structured ops (edge arrays are copied in).
  NodeId gather_rows(NodeId x, std::vector<int64_t> idx);
  // scores is [E x 1]; softmax within each segment id in [0, num_segments).
  NodeId segment_softmax(NodeId scores, std::vector<int64_t> segment, int64_t num_segments);
  // out[dst[e], :] += alpha[e] * vals[e, :]; alpha is [E x 1], vals [E x F].
  NodeId scatter_weighted_rows(NodeId alpha, NodeId vals, std::vector<int64_t> dst, int64_t num_rows);
  // (1 + eps) * x + neigh, eps a learnable scalar [1].
  NodeId gin_combine(NodeId x, NodeId neigh, NodeId eps);

  // Loss. Mean negative log-likelihood over `mask` rows, stable log-sum-exp.
  NodeId masked_cross_entropy(NodeId logits, std::vector<int> labels, std::vector<int64_t> mask);

  const Tensor& value(NodeId id) const;
  // Reverse sweep from a scalar node. Leaves unreachable from `loss` get zero
  // gradients. Throws NumericError if any forward value is non-finite.
  void backward(NodeId loss);
  const Tensor& grad(NodeId id) const;  // valid after backward()

  int64_t size() const;

 private:
  struct Node;
  NodeId push(Node n);
  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

// p <- p - lr * g, elementwise. Throws DimensionError on shape mismatch.
void sgd_step(Tensor& params, const Tensor& grad, double lr);
void sgd_step(std::vector<double>& params, const std::vector<double>& grad, double lr);

// Uniform [-s, s] with s = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_init(int64_t fan_in, int64_t fan_out, std::vector<int64_t> shape, Rng& rng);

}  // namespace flagcns::ad
