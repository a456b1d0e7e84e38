#include "dm/graph.hpp"

#include <cmath>

namespace dm {

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

const Graph::Node& Graph::node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }

NodeId Graph::check(NodeId id) const {
  DM_REQUIRE(id >= 0 && id < node_count(), InvalidArgument, "invalid node id " << id);
  return id;
}

const Tensor& Graph::value(NodeId id) const { return node(check(id)).value; }
bool Graph::requires_grad(NodeId id) const { return node(check(id)).requires_grad; }

NodeId Graph::constant(Tensor v) {
  Node n;
  n.op = Op::kConst;
  n.value = std::move(v);
  return push(std::move(n));
}

NodeId Graph::input(Tensor v) {
  Node n;
  n.op = Op::kInput;
  n.requires_grad = true;
  n.value = std::move(v);
  return push(std::move(n));
}

NodeId Graph::param(Tensor v) {
  Node n;
  n.op = Op::kParam;
  n.requires_grad = true;
  n.value = std::move(v);
  return push(std::move(n));
}

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  DM_REQUIRE(a.same_shape(b), InvalidArgument,
             op << ": shape mismatch " << a.rows() << "x" << a.cols() << " vs "
                << b.rows() << "x" << b.cols());
}
}  // namespace

NodeId Graph::add(NodeId a, NodeId b) {
  const Node& na = node(check(a));
  const Node& nb = node(check(b));
  require_same_shape(na.value, nb.value, "add");
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  Tensor out(na.value.rows(), na.value.cols());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = na.value[i] + nb.value[i];
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  const Node& na = node(check(a));
  const Node& nb = node(check(b));
  require_same_shape(na.value, nb.value, "sub");
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  Tensor out(na.value.rows(), na.value.cols());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = na.value[i] - nb.value[i];
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Node& na = node(check(a));
  const Node& nb = node(check(b));
  require_same_shape(na.value, nb.value, "mul");
  Node n;
  n.op = Op::kMul;
  n.a = a;
  n.b = b;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  Tensor out(na.value.rows(), na.value.cols());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = na.value[i] * nb.value[i];
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Graph::div(NodeId a, NodeId b) {
  const Node& na = node(check(a));
  const Node& nb = node(check(b));
  require_same_shape(na.value, nb.value, "div");
  Node n;
  n.op = Op::kDiv;
  n.a = a;
  n.b = b;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  Tensor out(na.value.rows(), na.value.cols());
  for (int64_t i = 0; i < out.size(); ++i) {
    DM_REQUIRE(nb.value[i] != 0.0, Numeric, "div: zero divisor at flat index " << i);
    out[i] = na.value[i] / nb.value[i];
  }
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double c) {
  const Node& na = node(check(a));
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.c0 = c;
  n.requires_grad = na.requires_grad;
  Tensor out(na.value.rows(), na.value.cols());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = c * na.value[i];
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Graph::add_scalar(NodeId a, double c) {
  const Node& na = node(check(a));
  Node n;
  n.op = Op::kAddScalar;
  n.a = a;
  n.c0 = c;
  n.requires_grad = na.requires_grad;
  Tensor out(na.value.rows(), na.value.cols());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = na.value[i] + c;
  n.value = std::move(out);
  return push(std::move(n));
}

namespace {

// C = opA(A) * opB(B); loop orders chosen for row-major streaming.
Tensor matmul_values(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  int64_t ar = ta ? a.cols() : a.rows();
  int64_t ac = ta ? a.rows() : a.cols();
  int64_t br = tb ? b.cols() : b.rows();
  int64_t bc = tb ? b.rows() : b.cols();
  DM_REQUIRE(ac == br, InvalidArgument,
             "matmul: inner dims differ, " << ar << "x" << ac << " vs " << br << "x" << bc);
  Tensor c(ar, bc, 0.0);
  if (!ta && !tb) {
    for (int64_t i = 0; i < ar; ++i) {
      const double* arow = a.data() + i * a.cols();
      double* crow = c.data() + i * bc;
      for (int64_t k = 0; k < ac; ++k) {
        double av = arow[k];
        if (av == 0.0) continue;
        const double* brow = b.data() + k * b.cols();
        for (int64_t j = 0; j < bc; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!ta && tb) {
    for (int64_t i = 0; i < ar; ++i) {
      const double* arow = a.data() + i * a.cols();
      double* crow = c.data() + i * bc;
      for (int64_t j = 0; j < bc; ++j) {
        const double* brow = b.data() + j * b.cols();
        double s = 0.0;
        for (int64_t k = 0; k < ac; ++k) s += arow[k] * brow[k];
        crow[j] = s;
      }
    }
  } else if (ta && !tb) {
    for (int64_t k = 0; k < ac; ++k) {
      const double* arow = a.data() + k * a.cols();
      const double* brow = b.data() + k * b.cols();
      for (int64_t i = 0; i < ar; ++i) {
        double av = arow[i];
        if (av == 0.0) continue;
        double* crow = c.data() + i * bc;
        for (int64_t j = 0; j < bc; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (int64_t i = 0; i < ar; ++i) {
      double* crow = c.data() + i * bc;
      for (int64_t j = 0; j < bc; ++j) {
        const double* brow = b.data() + j * b.cols();
        double s = 0.0;
        for (int64_t k = 0; k < ac; ++k) s += a.at(k, i) * brow[k];
        crow[j] = s;
      }
    }
  }
  return c;
}

}  // namespace

NodeId Graph::matmul(NodeId a, NodeId b, bool trans_a, bool trans_b) {
  const Node& na = node(check(a));
  const Node& nb = node(check(b));
  Node n;
  n.op = Op::kMatmul;
  n.a = a;
  n.b = b;
  n.i0 = trans_a ? 1 : 0;
  n.i1 = trans_b ? 1 : 0;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.value = matmul_values(na.value, nb.value, trans_a, trans_b);
  return push(std::move(n));
}

NodeId Graph::leaky_relu(NodeId a, double slope) {
  const Node& na = node(check(a));
  Node n;
  n.op = Op::kLeakyRelu;
  n.a = a;
  n.c0 = slope;
  n.requires_grad = na.requires_grad;
  Tensor out(na.value.rows(), na.value.cols());
  for (int64_t i = 0; i < out.size(); ++i) {
    double v = na.value[i];
    out[i] = v > 0.0 ? v : slope * v;
  }
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Graph::max_scalar(NodeId a, double c) {
  const Node& na = node(check(a));
  Node n;
  n.op = Op::kMaxScalar;
  n.a = a;
  n.c0 = c;
  n.requires_grad = na.requires_grad;
  Tensor out(na.value.rows(), na.value.cols());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::max(na.value[i], c);
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Graph::sqrt_op(NodeId a) {
  const Node& na = node(check(a));
  Node n;
  n.op = Op::kSqrt;
  n.a = a;
  n.requires_grad = na.requires_grad;
  Tensor out(na.value.rows(), na.value.cols());
  for (int64_t i = 0; i < out.size(); ++i) {
    DM_REQUIRE(na.value[i] >= 0.0, Numeric,
               "sqrt: negative entry " << na.value[i] << " at flat index " << i);
    out[i] = std::sqrt(na.value[i]);
  }
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Graph::exp_op(NodeId a) {
  const Node& na = node(check(a));
  Node n;
  n.op = Op::kExp;
  n.a = a;
  n.requires_grad = na.requires_grad;
  Tensor out(na.value.rows(), na.value.cols());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(na.value[i]);
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Graph::log_op(NodeId a) {
  const Node& na = node(check(a));
  Node n;
  n.op = Op::kLog;
  n.a = a;
  n.requires_grad = na.requires_grad;
  Tensor out(na.value.rows(), na.value.cols());
  for (int64_t i = 0; i < out.size(); ++i) {
    DM_REQUIRE(na.value[i] > 0.0, Numeric,
               "log: non-positive entry " << na.value[i] << " at flat index " << i);
    out[i] = std::log(na.value[i]);
  }
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Graph::bcast_row(NodeId a, int64_t n_rows) {
  const Node& na = node(check(a));
  DM_REQUIRE(na.value.rows() == 1, InvalidArgument,
             "bcast_row: expected 1 x d input, got " << na.value.rows() << " rows");
  DM_REQUIRE(n_rows >= 1, InvalidArgument, "bcast_row: need n >= 1");
  Node n;
  n.op = Op::kBcastRow;
  n.a = a;
  n.i0 = n_rows;
  n.requires_grad = na.requires_grad;
  int64_t d = na.value.cols();
  Tensor out(n_rows, d);
  for (int64_t r = 0; r < n_rows; ++r)
    for (int64_t c = 0; c < d; ++c) out.at(r, c) = na.value[c];
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Graph::bcast_col(NodeId a, int64_t n_cols) {
  const Node& na = node(check(a));
  DM_REQUIRE(na.value.cols() == 1, InvalidArgument,
             "bcast_col: expected n x 1 input, got " << na.value.cols() << " cols");
  DM_REQUIRE(n_cols >= 1, InvalidArgument, "bcast_col: need d >= 1");
  Node n;
  n.op = Op::kBcastCol;
  n.a = a;
  n.i0 = n_cols;
  n.requires_grad = na.requires_grad;
  int64_t rows = na.value.rows();
  Tensor out(rows, n_cols);
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < n_cols; ++c) out.at(r, c) = na.value[r];
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Graph::row_sum(NodeId a) {
  const Node& na = node(check(a));
  Node n;
  n.op = Op::kRowSum;
  n.a = a;
  n.requires_grad = na.requires_grad;
  Tensor out(na.value.rows(), 1);
  for (int64_t r = 0; r < na.value.rows(); ++r) {
    double s = 0.0;
    for (int64_t c = 0; c < na.value.cols(); ++c) s += na.value.at(r, c);
    out[r] = s;
  }
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Graph::col_sum(NodeId a) {
  const Node& na = node(check(a));
  Node n;
  n.op = Op::kColSum;
  n.a = a;
  n.requires_grad = na.requires_grad;
  Tensor out(1, na.value.cols());
  for (int64_t r = 0; r < na.value.rows(); ++r)
    for (int64_t c = 0; c < na.value.cols(); ++c) out[c] += na.value.at(r, c);
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Graph::sum_all(NodeId a) {
  const Node& na = node(check(a));
  Node n;
  n.op = Op::kSumAll;
  n.a = a;
  n.requires_grad = na.requires_grad;
  Tensor out(1, 1);
  double s = 0.0;
  for (int64_t i = 0; i < na.value.size(); ++i) s += na.value[i];
  out[0] = s;
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Graph::concat_rows(NodeId a, NodeId b) {
  const Node& na = node(check(a));
  const Node& nb = node(check(b));
  DM_REQUIRE(na.value.cols() == nb.value.cols(), InvalidArgument,
             "concat_rows: column mismatch " << na.value.cols() << " vs " << nb.value.cols());
  Node n;
  n.op = Op::kConcatRows;
  n.a = a;
  n.b = b;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  Tensor out(na.value.rows() + nb.value.rows(), na.value.cols());
  int64_t na_size = na.value.size();
  for (int64_t i = 0; i < na_size; ++i) out[i] = na.value[i];
  for (int64_t i = 0; i < nb.value.size(); ++i) out[na_size + i] = nb.value[i];
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Graph::slice_rows(NodeId a, int64_t r0, int64_t r1) {
  const Node& na = node(check(a));
  DM_REQUIRE(0 <= r0 && r0 < r1 && r1 <= na.value.rows(), InvalidArgument,
             "slice_rows: bad range [" << r0 << ", " << r1 << ") for "
                                       << na.value.rows() << " rows");
  Node n;
  n.op = Op::kSliceRows;
  n.a = a;
  n.i0 = r0;
  n.i1 = r1;
  n.requires_grad = na.requires_grad;
  int64_t d = na.value.cols();
  Tensor out(r1 - r0, d);
  for (int64_t r = r0; r < r1; ++r)
    for (int64_t c = 0; c < d; ++c) out.at(r - r0, c) = na.value.at(r, c);
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Graph::pad_rows(NodeId a, int64_t r0, int64_t n_total) {
  const Node& na = node(check(a));
  DM_REQUIRE(r0 >= 0 && r0 + na.value.rows() <= n_total, InvalidArgument,
             "pad_rows: block of " << na.value.rows() << " rows at " << r0
                                   << " does not fit in " << n_total);
  Node n;
  n.op = Op::kPadRows;
  n.a = a;
  n.i0 = r0;
  n.i1 = n_total;
  n.requires_grad = na.requires_grad;
  int64_t d = na.value.cols();
  Tensor out(n_total, d, 0.0);
  for (int64_t r = 0; r < na.value.rows(); ++r)
    for (int64_t c = 0; c < d; ++c) out.at(r0 + r, c) = na.value.at(r, c);
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Graph::mean_all(NodeId a) {
  const Node& na = node(check(a));
  int64_t n = na.value.size();
  DM_REQUIRE(n > 0, InvalidArgument, "mean_all: empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

NodeId Graph::row_sumsq(NodeId a) { return row_sum(mul(a, a)); }

NodeId Graph::affine(NodeId x, NodeId w, NodeId b) {
  NodeId xw = matmul(x, w, false, true);
  return add(xw, bcast_row(b, value(xw).rows()));
}

NodeId Graph::accumulate(NodeId acc, NodeId contrib) {
  if (acc < 0) return contrib;
  return add(acc, contrib);
}

std::vector<NodeId> Graph::backward(NodeId root, const std::vector<NodeId>& wrt) {
  const Node& r = node(check(root));
  DM_REQUIRE(r.value.rows() == 1 && r.value.cols() == 1, InvalidArgument,
             "backward: root must be 1x1, got " << r.value.rows() << "x" << r.value.cols());
  int64_t frontier = root + 1;
  std::vector<NodeId> adjoint(static_cast<size_t>(frontier), -1);
  adjoint[static_cast<size_t>(root)] = constant(Tensor(1, 1, 1.0));

  for (NodeId id = root; id >= 0; --id) {
    NodeId g = adjoint[static_cast<size_t>(id)];
    if (g < 0) continue;
    // Copy POD attributes only: pushing adjoint nodes may reallocate nodes_,
    // so no reference into nodes_ may be held across a push.
    const Node& cur_ref = nodes_[static_cast<size_t>(id)];
    if (!cur_ref.requires_grad) continue;
    struct {
      Op op;
      NodeId a, b;
      double c0;
      int64_t i0, i1;
    } cur{cur_ref.op, cur_ref.a, cur_ref.b, cur_ref.c0, cur_ref.i0, cur_ref.i1};
    NodeId a = cur.a;
    NodeId b = cur.b;
    bool ga = a >= 0 && node(a).requires_grad;
    bool gb = b >= 0 && node(b).requires_grad;
    int64_t a_rows = a >= 0 ? node(a).value.rows() : 0;
    int64_t a_cols = a >= 0 ? node(a).value.cols() : 0;
    int64_t b_rows = b >= 0 ? node(b).value.rows() : 0;
    auto acc = [&](NodeId target, NodeId contrib) {
      adjoint[static_cast<size_t>(target)] =
          accumulate(adjoint[static_cast<size_t>(target)], contrib);
    };
    switch (cur.op) {
      case Op::kConst:
      case Op::kInput:
      case Op::kParam:
        break;
      case Op::kAdd:
        if (ga) acc(a, g);
        if (gb) acc(b, g);
        break;
      case Op::kSub:
        if (ga) acc(a, g);
        if (gb) acc(b, neg(g));
        break;
      case Op::kMul:
        if (ga) acc(a, mul(g, b));
        if (gb) acc(b, mul(g, a));
        break;
      case Op::kDiv:
        // out = a / b: d/da = 1/b, d/db = -out/b.
        if (ga) acc(a, div(g, b));
        if (gb) acc(b, neg(div(mul(g, id), b)));
        break;
      case Op::kScale:
        if (ga) acc(a, scale(g, cur.c0));
        break;
      case Op::kAddScalar:
        if (ga) acc(a, g);
        break;
      case Op::kMatmul: {
        bool ta = cur.i0 != 0, tb = cur.i1 != 0;
        if (!ta && !tb) {
          if (ga) acc(a, matmul(g, b, false, true));
          if (gb) acc(b, matmul(a, g, true, false));
        } else if (!ta && tb) {
          if (ga) acc(a, matmul(g, b, false, false));
          if (gb) acc(b, matmul(g, a, true, false));
        } else if (ta && !tb) {
          if (ga) acc(a, matmul(b, g, false, true));
          if (gb) acc(b, matmul(a, g, false, false));
        } else {
          if (ga) acc(a, matmul(b, g, true, true));
          if (gb) acc(b, matmul(g, a, true, true));
        }
        break;
      }
      case Op::kLeakyRelu: {
        if (ga) {
          Tensor mask(a_rows, a_cols);
          {
            const Tensor& av = node(a).value;
            for (int64_t i = 0; i < av.size(); ++i) mask[i] = av[i] > 0.0 ? 1.0 : cur.c0;
          }
          acc(a, mul(g, constant(std::move(mask))));
        }
        break;
      }
      case Op::kMaxScalar: {
        if (ga) {
          Tensor mask(a_rows, a_cols);
          {
            const Tensor& av = node(a).value;
            for (int64_t i = 0; i < av.size(); ++i) mask[i] = av[i] > cur.c0 ? 1.0 : 0.0;
          }
          acc(a, mul(g, constant(std::move(mask))));
        }
        break;
      }
      case Op::kSqrt:
        // d sqrt(a) = 0.5 / sqrt(a); reuse the output node.
        if (ga) acc(a, scale(div(g, id), 0.5));
        break;
      case Op::kExp:
        if (ga) acc(a, mul(g, id));
        break;
      case Op::kLog:
        if (ga) acc(a, div(g, a));
        break;
      case Op::kBcastRow:
        if (ga) acc(a, col_sum(g));
        break;
      case Op::kBcastCol:
        if (ga) acc(a, row_sum(g));
        break;
      case Op::kRowSum:
        if (ga) acc(a, bcast_col(g, a_cols));
        break;
      case Op::kColSum:
        if (ga) acc(a, bcast_row(g, a_rows));
        break;
      case Op::kSumAll: {
        if (ga) {
          NodeId col = bcast_row(g, a_rows);  // 1x1 -> n x 1
          acc(a, a_cols == 1 ? col : bcast_col(col, a_cols));
        }
        break;
      }
      case Op::kConcatRows: {
        if (ga) acc(a, slice_rows(g, 0, a_rows));
        if (gb) acc(b, slice_rows(g, a_rows, a_rows + b_rows));
        break;
      }
      case Op::kSliceRows:
        if (ga) acc(a, pad_rows(g, cur.i0, a_rows));
        break;
      case Op::kPadRows:
        if (ga) acc(a, slice_rows(g, cur.i0, cur.i0 + a_rows));
        break;
    }
  }

  std::vector<NodeId> grads;
  grads.reserve(wrt.size());
  for (NodeId w : wrt) {
    check(w);
    NodeId gid = (w < frontier) ? adjoint[static_cast<size_t>(w)] : -1;
    if (gid < 0) {
      const Tensor& wv = node(w).value;
      gid = constant(Tensor(wv.rows(), wv.cols(), 0.0));
    }
    grads.push_back(gid);
  }
  return grads;
}

}  // namespace dm
