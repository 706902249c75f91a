#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "advner/tensor.hpp"

namespace advner::ad {

using NodeId = int32_t;

// Reverse-mode tape over dense rank-1/2/3 float tensors.
//
// Ops append nodes in execution order (parents always precede children), each
// carrying a backward closure. backward(root) seeds d(root)/d(root) = 1 and
// walks the tape in reverse, accumulating (summing) gradients into every
// node. Gradient shapes always match value shapes.
//
// Broadcasting is deliberately restricted to bias_add over the last axis;
// every other shape mismatch throws, which keeps the backward rules small
// enough to audit one by one.
class Tape {
 public:
  explicit Tape(bool check_finite = true) : check_finite_(check_finite) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- graph construction -------------------------------------------------

  // Leaf node holding an input or parameter value.
  NodeId input(Tensor value);

  NodeId add(NodeId a, NodeId b);               // elementwise, shapes equal
  NodeId mul(NodeId a, NodeId b);               // elementwise, shapes equal
  NodeId scale(NodeId a, double c);
  NodeId bias_add(NodeId x, NodeId b);          // b broadcast over leading axes
  NodeId sum(NodeId x);                         // scalar

  // [m,k]x[k,n] -> [m,n], or [b,m,k]x[k,n] -> [b,m,n] (shared right factor).
  NodeId matmul(NodeId a, NodeId b);
  // Batched: [g,m,k]x[g,k,n] -> [g,m,n].
  NodeId bmm(NodeId a, NodeId b);
  // Batched with B transposed: [g,m,k]x[g,n,k] -> [g,m,n].
  NodeId bmm_nt(NodeId a, NodeId b);

  NodeId softmax(NodeId x, int axis);
  NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, float eps = 1e-5f);
  NodeId gelu(NodeId x);

  // Identity forward; backward multiplies the upstream gradient by -lambda.
  NodeId gradient_reversal(NodeId x, double lambda);

  // Inverted dropout with a counter-based mask derived from seed; identical
  // seed -> identical mask, independent of thread count.
  NodeId dropout(NodeId x, float rate, uint64_t seed);

  // Embedding lookup: table [V,d], ids row-major [rows,len] -> [rows,len,d].
  // pos (optional, may be empty) is a constant [len,d] positional table added
  // in place. Out-of-range ids throw DataError naming the sequence row.
  NodeId embedding(NodeId table, const std::vector<int32_t>& ids, int64_t rows,
                   int64_t len, const Tensor* pos);

  // scores [b*h, L, L] += -1e9 at key columns where mask[b,L] == 0.
  NodeId attention_mask(NodeId scores, const std::vector<int32_t>& mask, int64_t batch,
                        int64_t heads);

  // [b,L,d] with mask [b,L] -> [b,d], mean over mask==1 positions per row.
  NodeId masked_mean_pool(NodeId x, const std::vector<int32_t>& mask);

  // [b,L,d] -> [b*h, L, d/h] and back.
  NodeId split_heads(NodeId x, int64_t heads);
  NodeId merge_heads(NodeId x, int64_t heads);

  // Mean over mask==1 positions of -log softmax(logits)[target]; logits
  // [b,L,C], targets/mask row-major [b*L]. Fused stable log-softmax.
  NodeId nll_masked(NodeId logits, const std::vector<int32_t>& targets,
                    const std::vector<int32_t>& mask);

  // Sum over rows of -log softmax(logits)[label]; logits [N,C].
  NodeId nll_rows(NodeId logits, const std::vector<int32_t>& labels);

  // ---- execution ----------------------------------------------------------

  // Root must be scalar (numel == 1). Deterministic: identical tape =>
  // identical gradient map.
  void backward(NodeId root);

  const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
  // Valid after backward(); zero-filled for nodes the root does not reach.
  const std::vector<float>& grad(NodeId id) const;

  // Scalar value with the final float32 rounding undone where the op kept a
  // double accumulator; used by the finite-difference oracle.
  double scalar_value(NodeId id) const;

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<NodeId> parents;
    std::function<void(Tape&, NodeId)> backward_fn;  // null for leaves
    std::string op;
    double precise = std::numeric_limits<double>::quiet_NaN();  // scalars only
  };

  NodeId push(Tensor value, std::vector<NodeId> parents,
              std::function<void(Tape&, NodeId)> backward_fn, std::string op);
  void check_node_finite(NodeId id) const;
  float* grad_ptr(NodeId id) { return grads_[static_cast<size_t>(id)].data(); }
  const float* value_ptr(NodeId id) const {
    return nodes_[static_cast<size_t>(id)].value.ptr();
  }
  void set_precise(NodeId id, double v) { nodes_[static_cast<size_t>(id)].precise = v; }

  std::vector<Node> nodes_;
  std::vector<std::vector<float>> grads_;
  bool check_finite_ = true;
  bool backward_done_ = false;
};

}  // namespace advner::ad
