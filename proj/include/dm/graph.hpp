#pragma once

#include <cstdint>
#include <vector>

#include "dm/tensor.hpp"

namespace dm {

using NodeId = int64_t;

// Define-by-run computation tape over rank-2 tensors. Values are computed
// eagerly at node creation. backward() emits ordinary graph nodes for the
// adjoints, so gradients are themselves differentiable; derivatives of
// piecewise-linear ops (leaky_relu, max_scalar) enter as constant masks, so
// their second derivative is exactly zero by construction.
class Graph {
 public:
  enum class Op : uint8_t {
    kConst, kInput, kParam,
    kAdd, kSub, kMul, kDiv,
    kScale, kAddScalar,
    kMatmul,
    kLeakyRelu, kMaxScalar,
    kSqrt, kExp, kLog,
    kBcastRow, kBcastCol,
    kRowSum, kColSum, kSumAll,
    kConcatRows, kSliceRows, kPadRows,
  };

  // Leaves. constant() never receives gradient; input/param do.
  NodeId constant(Tensor v);
  NodeId input(Tensor v);
  NodeId param(Tensor v);

  // Elementwise on equal shapes.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);

  NodeId scale(NodeId a, double c);       // c * a
  NodeId add_scalar(NodeId a, double c);  // a + c

  // opA(A) * opB(B) where the flags transpose their operand.
  NodeId matmul(NodeId a, NodeId b, bool trans_a = false, bool trans_b = false);

  NodeId leaky_relu(NodeId a, double slope);  // slope 0 gives relu
  NodeId max_scalar(NodeId a, double c);      // elementwise max(a, c)
  NodeId sqrt_op(NodeId a);                   // requires entries >= 0
  NodeId exp_op(NodeId a);
  NodeId log_op(NodeId a);                    // requires entries > 0

  NodeId bcast_row(NodeId a, int64_t n);  // 1 x d -> n x d (repeat row)
  NodeId bcast_col(NodeId a, int64_t d);  // n x 1 -> n x d (repeat column)
  NodeId row_sum(NodeId a);               // n x d -> n x 1
  NodeId col_sum(NodeId a);               // n x d -> 1 x d
  NodeId sum_all(NodeId a);               // n x d -> 1 x 1

  NodeId concat_rows(NodeId a, NodeId b);
  NodeId slice_rows(NodeId a, int64_t r0, int64_t r1);        // rows [r0, r1)
  NodeId pad_rows(NodeId a, int64_t r0, int64_t n_total);     // embed at r0 in zeros

  // Convenience compositions.
  NodeId mean_all(NodeId a);
  NodeId neg(NodeId a) { return scale(a, -1.0); }
  // Per-row squared L2 norm, n x 1.
  NodeId row_sumsq(NodeId a);
  // x W^T + b for W: out x in, b: 1 x out.
  NodeId affine(NodeId x, NodeId w, NodeId b);

  const Tensor& value(NodeId id) const;
  bool requires_grad(NodeId id) const;
  int64_t node_count() const { return static_cast<int64_t>(nodes_.size()); }

  // Reverse sweep from a 1x1 root. Returns one adjoint node per entry of
  // `wrt` (a zero constant when the root does not depend on it). May be
  // called repeatedly, including on nodes produced by earlier sweeps.
  std::vector<NodeId> backward(NodeId root, const std::vector<NodeId>& wrt);

 private:
  struct Node {
    Op op;
    NodeId a = -1;
    NodeId b = -1;
    double c0 = 0.0;   // scalar attribute (scale factor, slope, ...)
    int64_t i0 = 0;    // integer attributes (broadcast size, slice bounds)
    int64_t i1 = 0;
    bool requires_grad = false;
    Tensor value;
  };

  NodeId push(Node n);
  const Node& node(NodeId id) const;
  NodeId check(NodeId id) const;
  NodeId accumulate(NodeId acc, NodeId contrib);

  std::vector<Node> nodes_;
};

}  // namespace dm
