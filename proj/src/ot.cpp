#include "dm/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dm::ot {

CostKind cost_kind_from_string(const std::string& s) {
  if (s == "l1") return CostKind::kL1;
  if (s == "l2") return CostKind::kL2;
  fail(Status::InvalidArgument, "unknown cost kind '" + s + "' (expected l1 or l2)");
}

const char* cost_kind_name(CostKind k) { return k == CostKind::kL1 ? "l1" : "l2"; }

namespace {

double kahan_sum(const std::vector<double>& xs) {
  double s = 0.0, c = 0.0;
  for (double x : xs) {
    double y = x - c;
    double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  return s;
}

}  // namespace

DiscreteMeasure DiscreteMeasure::uniform(Tensor points) {
  DM_REQUIRE(points.rows() >= 1, InvalidArgument, "measure needs at least one point");
  int64_t n = points.rows();
  DiscreteMeasure m{std::move(points), std::vector<double>(n, 1.0 / double(n))};
  m.validate();
  return m;
}

DiscreteMeasure DiscreteMeasure::weighted(Tensor points, std::vector<double> weights) {
  DiscreteMeasure m{std::move(points), std::move(weights)};
  m.validate();
  return m;
}

void DiscreteMeasure::validate() const {
  DM_REQUIRE(points.rows() >= 1, InvalidArgument, "measure needs at least one point");
  DM_REQUIRE(static_cast<int64_t>(weights.size()) == points.rows(), InvalidArgument,
             "measure has " << points.rows() << " points but " << weights.size()
                            << " weights");
  points.require_finite("measure points");
  for (size_t i = 0; i < weights.size(); ++i)
    DM_REQUIRE(std::isfinite(weights[i]) && weights[i] >= 0.0, InvalidArgument,
               "weight " << i << " is negative or non-finite");
  double s = kahan_sum(weights);
  DM_REQUIRE(std::abs(s - 1.0) <= 1e-12, InvalidArgument,
             "weights sum to " << s << ", expected 1 within 1e-12");
}

Tensor ground_cost(const Tensor& a, const Tensor& b, CostKind kind) {
  DM_REQUIRE(a.cols() == b.cols(), InvalidArgument,
             "ground_cost: dimension mismatch " << a.cols() << " vs " << b.cols());
  int64_t n1 = a.rows(), n2 = b.rows(), d = a.cols();
  Tensor c(n1, n2);
  for (int64_t i = 0; i < n1; ++i) {
    const double* ai = a.data() + i * d;
    for (int64_t j = 0; j < n2; ++j) {
      const double* bj = b.data() + j * d;
      double acc = 0.0;
      if (kind == CostKind::kL1) {
        for (int64_t k = 0; k < d; ++k) acc += std::abs(ai[k] - bj[k]);
      } else {
        for (int64_t k = 0; k < d; ++k) {
          double t = ai[k] - bj[k];
          acc += t * t;
        }
        acc = std::sqrt(acc);
      }
      c.at(i, j) = acc;
    }
  }
  return c;
}

void Coupling::validate(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                        CostKind kind) const {
  DM_REQUIRE(plan.rows() == mu.size() && plan.cols() == nu.size(), InvalidArgument,
             "coupling shape " << plan.rows() << "x" << plan.cols()
                               << " does not match measures");
  for (int64_t i = 0; i < plan.size(); ++i)
    DM_REQUIRE(plan[i] >= 0.0, Numeric, "coupling has negative entry " << plan[i]);
  for (int64_t i = 0; i < plan.rows(); ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < plan.cols(); ++j) s += plan.at(i, j);
    DM_REQUIRE(std::abs(s - mu.weights[i]) <= 1e-9, Numeric,
               "row marginal " << i << " off by " << s - mu.weights[i]);
  }
  for (int64_t j = 0; j < plan.cols(); ++j) {
    double s = 0.0;
    for (int64_t i = 0; i < plan.rows(); ++i) s += plan.at(i, j);
    DM_REQUIRE(std::abs(s - nu.weights[j]) <= 1e-9, Numeric,
               "column marginal " << j << " off by " << s - nu.weights[j]);
  }
  Tensor c = ground_cost(mu.points, nu.points, kind);
  double recomputed = 0.0;
  for (int64_t i = 0; i < plan.size(); ++i) recomputed += plan[i] * c[i];
  DM_REQUIRE(std::abs(recomputed - cost) <= 1e-9 * std::max(1.0, std::abs(cost)), Numeric,
             "coupling cost " << cost << " inconsistent with plan (" << recomputed << ")");
}

namespace {

// ---------------------------------------------------------------------------
// Transportation network simplex on the dense bipartite graph.
// Rows are nodes 0..m-1 with supply a[i]; columns are nodes m..m+n-1 with
// demand b[j]. The basis is a spanning tree of m+n-1 arcs. Entering arcs are
// found by Dantzig block search; after a pivot budget the rule degrades to
// Bland's (first negative) scan to rule out cycling on degenerate instances.
// ---------------------------------------------------------------------------
struct SimplexBasisArc {
  int32_t row;
  int32_t col;
  double flow;
};

class TransportSimplex {
 public:
  TransportSimplex(const Tensor& cost, const std::vector<double>& a,
                   const std::vector<double>& b)
      : cost_(cost),
        m_(static_cast<int32_t>(a.size())),
        n_(static_cast<int32_t>(b.size())),
        a_(a),
        b_(b) {}

  // Returns the optimal plan (m x n) and cost.
  std::pair<Tensor, double> solve() {
    northwest_corner();
    rebuild_tree();
    double max_c = cost_.max_abs();
    double tol = 1e-12 * std::max(1.0, max_c);
    int64_t num_arcs = int64_t(m_) * n_;
    int64_t block = std::max<int64_t>(64, int64_t(std::sqrt(double(num_arcs))));
    int64_t bland_after = 50 * int64_t(m_ + n_);
    int64_t budget = 1000 * int64_t(m_ + n_) + 10000;
    int64_t pivots = 0;
    int64_t cursor = 0;
    while (true) {
      int64_t entering = -1;
      if (pivots <= bland_after) {
        // Dantzig block search: most negative reduced cost within a block,
        // scanning blocks round-robin from the last position.
        double best = -tol;
        int64_t seen = 0;
        while (seen < num_arcs) {
          int64_t stop = std::min(num_arcs - seen, block);
          for (int64_t t = 0; t < stop; ++t) {
            int64_t idx = cursor;
            cursor = cursor + 1 == num_arcs ? 0 : cursor + 1;
            int32_t i = static_cast<int32_t>(idx / n_);
            int32_t j = static_cast<int32_t>(idx % n_);
            double rc = cost_.at(i, j) - pot_[i] - pot_[m_ + j];
            if (rc < best) {
              best = rc;
              entering = idx;
            }
          }
          seen += stop;
          if (entering >= 0) break;
        }
      } else {
        for (int64_t idx = 0; idx < num_arcs; ++idx) {
          int32_t i = static_cast<int32_t>(idx / n_);
          int32_t j = static_cast<int32_t>(idx % n_);
          if (cost_.at(i, j) - pot_[i] - pot_[m_ + j] < -tol) {
            entering = idx;
            break;
          }
        }
      }
      if (entering < 0) break;  // optimal
      pivot(static_cast<int32_t>(entering / n_), static_cast<int32_t>(entering % n_));
      ++pivots;
      DM_REQUIRE(pivots <= budget, Numeric,
                 "transport simplex exceeded pivot budget (" << budget << ")");
    }
    Tensor plan(m_, n_, 0.0);
    double total = 0.0;
    for (const auto& arc : basis_) {
      double f = std::max(0.0, arc.flow);
      plan.at(arc.row, arc.col) = f;
      total += f * cost_.at(arc.row, arc.col);
    }
    return {std::move(plan), total};
  }

 private:
  void northwest_corner() {
    basis_.reserve(m_ + n_ - 1);
    int32_t i = 0, j = 0;
    double ra = a_[0], rb = b_[0];
    while (true) {
      double f = std::min(ra, rb);
      basis_.push_back({i, j, std::max(0.0, f)});
      if (i == m_ - 1 && j == n_ - 1) break;
      if (ra <= rb && i < m_ - 1) {
        rb -= f;
        ++i;
        ra = a_[i];
      } else if (j < n_ - 1) {
        ra -= f;
        ++j;
        rb = b_[j];
      } else {
        rb -= f;
        ++i;
        ra = a_[i];
      }
    }
  }

  // Recomputes parent/depth/potentials from the basis arc list.
  void rebuild_tree() {
    int32_t total = m_ + n_;
    adj_.assign(total, {});
    for (size_t k = 0; k < basis_.size(); ++k) {
      const auto& arc = basis_[k];
      adj_[arc.row].push_back(static_cast<int32_t>(k));
      adj_[m_ + arc.col].push_back(static_cast<int32_t>(k));
    }
    parent_.assign(total, -1);
    parent_arc_.assign(total, -1);
    depth_.assign(total, 0);
    pot_.assign(total, 0.0);
    seen_.assign(total, false);
    // Iterative DFS from row node 0.
    std::vector<int32_t> stack = {0};
    seen_[0] = true;
    pot_[0] = 0.0;
    int32_t visited = 1;
    while (!stack.empty()) {
      int32_t u = stack.back();
      stack.pop_back();
      for (int32_t k : adj_[u]) {
        const auto& arc = basis_[static_cast<size_t>(k)];
        int32_t v = (u < m_) ? m_ + arc.col : arc.row;
        if (seen_[v]) continue;
        seen_[v] = true;
        parent_[v] = u;
        parent_arc_[v] = k;
        depth_[v] = depth_[u] + 1;
        // Basic arcs have zero reduced cost: u_row + v_col = c.
        pot_[v] = cost_.at(arc.row, arc.col) - pot_[u];
        stack.push_back(v);
        ++visited;
      }
    }
    DM_REQUIRE(visited == total, Internal, "transport basis is not a spanning tree");
  }

  void pivot(int32_t er, int32_t ec) {
    // Collect tree paths from both endpoints of the entering arc up to their
    // lowest common ancestor. On the row-side walk an arc hanging below a row
    // node loses flow; on the column-side walk an arc below a column node
    // loses flow; the other arcs gain.
    path_r_.clear();
    path_c_.clear();
    int32_t u = er;          // row-side node
    int32_t v = m_ + ec;     // col-side node
    while (depth_[u] > depth_[v]) {
      path_r_.push_back(u);
      u = parent_[u];
    }
    while (depth_[v] > depth_[u]) {
      path_c_.push_back(v);
      v = parent_[v];
    }
    while (u != v) {
      path_r_.push_back(u);
      u = parent_[u];
      path_c_.push_back(v);
      v = parent_[v];
    }
    // Find theta = min flow over decreasing arcs, and the leaving arc.
    double theta = std::numeric_limits<double>::infinity();
    int32_t leaving = -1;
    auto consider = [&](int32_t child, bool row_side) {
      bool child_is_row = child < m_;
      bool decreasing = row_side ? child_is_row : !child_is_row;
      if (!decreasing) return;
      int32_t k = parent_arc_[child];
      if (basis_[static_cast<size_t>(k)].flow < theta) {
        theta = basis_[static_cast<size_t>(k)].flow;
        leaving = k;
      }
    };
    for (int32_t child : path_r_) consider(child, true);
    for (int32_t child : path_c_) consider(child, false);
    DM_REQUIRE(leaving >= 0, Internal, "transport pivot found no leaving arc");
    // Apply the flow change around the cycle.
    auto apply = [&](int32_t child, bool row_side) {
      bool child_is_row = child < m_;
      bool decreasing = row_side ? child_is_row : !child_is_row;
      int32_t k = parent_arc_[child];
      auto& arc = basis_[static_cast<size_t>(k)];
      arc.flow += decreasing ? -theta : theta;
      if (arc.flow < 0.0) arc.flow = 0.0;
    };
    for (int32_t child : path_r_) apply(child, true);
    for (int32_t child : path_c_) apply(child, false);
    basis_[static_cast<size_t>(leaving)] = {er, ec, theta};
    rebuild_tree();
  }

  const Tensor& cost_;
  int32_t m_, n_;
  const std::vector<double>& a_;
  const std::vector<double>& b_;
  std::vector<SimplexBasisArc> basis_;
  std::vector<std::vector<int32_t>> adj_;
  std::vector<int32_t> parent_, parent_arc_;
  std::vector<int32_t> depth_;
  std::vector<double> pot_;
  std::vector<char> seen_;
  std::vector<int32_t> path_r_, path_c_;
};

bool nearly_uniform(const std::vector<double>& w) {
  double expect = 1.0 / double(w.size());
  for (double x : w)
    if (std::abs(x - expect) > 1e-15) return false;
  return true;
}

}  // namespace

Coupling mallows_exact(const DiscreteMeasure& mu, const DiscreteMeasure& nu, CostKind kind) {
  mu.validate();
  nu.validate();
  DM_REQUIRE(mu.dim() == nu.dim(), InvalidArgument,
             "measures have different dimensions " << mu.dim() << " vs " << nu.dim());

  // Drop zero-weight atoms; remember original positions.
  std::vector<int64_t> ia, jb;
  for (int64_t i = 0; i < mu.size(); ++i)
    if (mu.weights[i] > 0.0) ia.push_back(i);
  for (int64_t j = 0; j < nu.size(); ++j)
    if (nu.weights[j] > 0.0) jb.push_back(j);
  DM_REQUIRE(!ia.empty() && !jb.empty(), InvalidArgument,
             "measure has no positive-weight atoms");

  int64_t m = static_cast<int64_t>(ia.size()), n = static_cast<int64_t>(jb.size());
  Tensor pa(m, mu.dim()), pb(n, nu.dim());
  std::vector<double> wa(m), wb(n);
  for (int64_t i = 0; i < m; ++i) {
    wa[i] = mu.weights[ia[i]];
    for (int64_t k = 0; k < mu.dim(); ++k) pa.at(i, k) = mu.points.at(ia[i], k);
  }
  for (int64_t j = 0; j < n; ++j) {
    wb[j] = nu.weights[jb[j]];
    for (int64_t k = 0; k < nu.dim(); ++k) pb.at(j, k) = nu.points.at(jb[j], k);
  }
  // Force exact mass balance for the simplex flow arithmetic.
  double sa = kahan_sum(wa), sb = kahan_sum(wb);
  wb[n - 1] += sa - sb;

  Tensor inner_plan;
  double cost = 0.0;
  Tensor c = ground_cost(pa, pb, kind);
  if (m == n && nearly_uniform(wa) && nearly_uniform(wb)) {
    std::vector<int64_t> assign = hungarian_min(c);
    inner_plan = Tensor(m, n, 0.0);
    for (int64_t i = 0; i < m; ++i) {
      inner_plan.at(i, assign[i]) = wa[i];
      cost += wa[i] * c.at(i, assign[i]);
    }
  } else {
    TransportSimplex simplex(c, wa, wb);
    auto [plan, total] = simplex.solve();
    inner_plan = std::move(plan);
    cost = total;
  }

  Coupling out;
  out.plan = Tensor(mu.size(), nu.size(), 0.0);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.plan.at(ia[i], jb[j]) = inner_plan.at(i, j);
  out.cost = cost;
  out.validate(mu, nu, kind);
  return out;
}

Coupling sinkhorn(const DiscreteMeasure& mu, const DiscreteMeasure& nu, CostKind kind,
                  const SinkhornOptions& opts) {
  mu.validate();
  nu.validate();
  DM_REQUIRE(mu.dim() == nu.dim(), InvalidArgument,
             "measures have different dimensions " << mu.dim() << " vs " << nu.dim());
  DM_REQUIRE(opts.reg > 0.0, InvalidArgument, "sinkhorn regularization must be positive");
  DM_REQUIRE(opts.max_iters >= 1, InvalidArgument, "sinkhorn needs max_iters >= 1");

  int64_t m = mu.size(), n = nu.size();
  Tensor c = ground_cost(mu.points, nu.points, kind);
  // Work in log space with potentials f, g: plan = exp((f_i + g_j - C_ij)/reg).
  // The regularizer is annealed from the cost scale down to the requested
  // value (halving per level, warm-started potentials); a cold start at small
  // reg would need orders of magnitude more sweeps.
  std::vector<double> f(m, 0.0), g(n, 0.0), loga(m), logb(n);
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  for (int64_t i = 0; i < m; ++i)
    loga[i] = mu.weights[i] > 0.0 ? std::log(mu.weights[i]) : kNegInf;
  for (int64_t j = 0; j < n; ++j)
    logb[j] = nu.weights[j] > 0.0 ? std::log(nu.weights[j]) : kNegInf;

  double reg = opts.reg;
  auto logsumexp_row = [&](int64_t i) {
    double mx = kNegInf;
    for (int64_t j = 0; j < n; ++j) mx = std::max(mx, (g[j] - c.at(i, j)) / reg);
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) s += std::exp((g[j] - c.at(i, j)) / reg - mx);
    return mx + std::log(s);
  };
  auto logsumexp_col = [&](int64_t j) {
    double mx = kNegInf;
    for (int64_t i = 0; i < m; ++i) mx = std::max(mx, (f[i] - c.at(i, j)) / reg);
    double s = 0.0;
    for (int64_t i = 0; i < m; ++i) s += std::exp((f[i] - c.at(i, j)) / reg - mx);
    return mx + std::log(s);
  };
  auto row_violation = [&]() {
    // After the g update the column marginals are exact; measure rows.
    double total = 0.0;
    for (int64_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (int64_t j = 0; j < n; ++j) {
        if (f[i] == kNegInf || g[j] == kNegInf) continue;
        s += std::exp((f[i] + g[j] - c.at(i, j)) / reg);
      }
      total += std::abs(s - mu.weights[i]);
    }
    return total;
  };

  double violation = std::numeric_limits<double>::infinity();
  bool converged = false;
  int64_t iters_used = 0;
  double level = std::max(opts.reg, c.max_abs());
  while (true) {
    reg = level;
    bool final_level = level <= opts.reg;
    double level_tol = final_level ? opts.tol : std::max(opts.tol, 1e-3);
    int64_t level_budget = final_level ? opts.max_iters - iters_used
                                       : std::min<int64_t>(100, opts.max_iters - iters_used);
    for (int64_t it = 0; it < level_budget; ++it) {
      for (int64_t i = 0; i < m; ++i)
        f[i] = loga[i] == kNegInf ? kNegInf : reg * (loga[i] - logsumexp_row(i));
      for (int64_t j = 0; j < n; ++j)
        g[j] = logb[j] == kNegInf ? kNegInf : reg * (logb[j] - logsumexp_col(j));
      ++iters_used;
      if (it % 10 == 9 || it == level_budget - 1) {
        violation = row_violation();
        if (violation <= level_tol) break;
      }
    }
    if (final_level) {
      converged = violation <= opts.tol;
      break;
    }
    level = std::max(opts.reg, 0.5 * level);
    if (iters_used >= opts.max_iters) {
      reg = opts.reg;
      break;
    }
  }
  DM_REQUIRE(converged, Numeric,
             "sinkhorn did not converge: marginal violation "
                 << violation << " after " << iters_used << " iterations (tol "
                 << opts.tol << ")");

  Tensor plan(m, n, 0.0);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      if (f[i] == kNegInf || g[j] == kNegInf) continue;
      plan.at(i, j) = std::exp((f[i] + g[j] - c.at(i, j)) / reg);
    }
  // Round onto the transport polytope: scale rows down to their targets, then
  // columns, then spread the leftover mass as a rank-one correction.
  for (int64_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) s += plan.at(i, j);
    double scale = (s > 0.0) ? std::min(1.0, mu.weights[i] / s) : 1.0;
    for (int64_t j = 0; j < n; ++j) plan.at(i, j) *= scale;
  }
  for (int64_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (int64_t i = 0; i < m; ++i) s += plan.at(i, j);
    double scale = (s > 0.0) ? std::min(1.0, nu.weights[j] / s) : 1.0;
    for (int64_t i = 0; i < m; ++i) plan.at(i, j) *= scale;
  }
  std::vector<double> ra(m, 0.0), rb(n, 0.0);
  double missing = 0.0;
  for (int64_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) s += plan.at(i, j);
    ra[i] = std::max(0.0, mu.weights[i] - s);
    missing += ra[i];
  }
  for (int64_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (int64_t i = 0; i < m; ++i) s += plan.at(i, j);
    rb[j] = std::max(0.0, nu.weights[j] - s);
  }
  if (missing > 0.0) {
    for (int64_t i = 0; i < m; ++i) {
      if (ra[i] == 0.0) continue;
      for (int64_t j = 0; j < n; ++j) plan.at(i, j) += ra[i] * rb[j] / missing;
    }
  }

  Coupling out;
  out.cost = 0.0;
  for (int64_t i = 0; i < plan.size(); ++i) out.cost += plan[i] * c[i];
  out.plan = std::move(plan);
  out.validate(mu, nu, kind);
  return out;
}

double dual_estimate(const std::vector<double>& critic_on_reference,
                     const std::vector<double>& critic_on_representations) {
  DM_REQUIRE(!critic_on_reference.empty() && !critic_on_representations.empty(),
             InvalidArgument, "dual_estimate needs non-empty critic values");
  double mr = kahan_sum(critic_on_reference) / double(critic_on_reference.size());
  double mz = kahan_sum(critic_on_representations) / double(critic_on_representations.size());
  return mr - mz;
}

std::vector<int64_t> hungarian_min(const Tensor& cost) {
  DM_REQUIRE(cost.rows() == cost.cols(), InvalidArgument,
             "assignment needs a square matrix, got " << cost.rows() << "x" << cost.cols());
  cost.require_finite("assignment cost");
  int64_t n = cost.rows();
  const double inf = std::numeric_limits<double>::infinity();
  // Potentials-based shortest augmenting path (rows and columns 1-indexed;
  // index 0 is the virtual start).
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int64_t> p(n + 1, 0), way(n + 1, 0);
  for (int64_t i = 1; i <= n; ++i) {
    p[0] = i;
    int64_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int64_t i0 = p[j0], j1 = -1;
      double delta = inf;
      for (int64_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int64_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int64_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int64_t> row_to_col(n, -1);
  for (int64_t j = 1; j <= n; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

std::vector<int64_t> assign_labels(const Tensor& mass) {
  DM_REQUIRE(mass.rows() == mass.cols(), InvalidArgument,
             "class mass matrix must be square, got " << mass.rows() << "x" << mass.cols());
  Tensor neg(mass.rows(), mass.cols());
  for (int64_t i = 0; i < mass.size(); ++i) neg[i] = -mass[i];
  return hungarian_min(neg);
}

Tensor class_mass_matrix(const Coupling& coupling, const std::vector<int>& source_labels,
                         const std::vector<int>& reference_classes, int num_classes) {
  DM_REQUIRE(num_classes >= 1, InvalidArgument, "need at least one class");
  DM_REQUIRE(static_cast<int64_t>(source_labels.size()) == coupling.plan.rows(),
             InvalidArgument,
             "source label count " << source_labels.size() << " does not match plan rows "
                                   << coupling.plan.rows());
  DM_REQUIRE(static_cast<int64_t>(reference_classes.size()) == coupling.plan.cols(),
             InvalidArgument,
             "reference class count " << reference_classes.size()
                                      << " does not match plan columns "
                                      << coupling.plan.cols());
  Tensor out(num_classes, num_classes, 0.0);
  for (int64_t i = 0; i < coupling.plan.rows(); ++i) {
    int k = source_labels[i];
    DM_REQUIRE(k >= 1 && k <= num_classes, InvalidArgument,
               "source label " << k << " at row " << i << " outside [1, " << num_classes
                               << "]");
    for (int64_t j = 0; j < coupling.plan.cols(); ++j) {
      int l = reference_classes[j];
      DM_REQUIRE(l >= 1 && l <= num_classes, InvalidArgument,
                 "reference class " << l << " at column " << j << " outside [1, "
                                    << num_classes << "]");
      out.at(k - 1, l - 1) += coupling.plan.at(i, j);
    }
  }
  return out;
}

}  // namespace dm::ot
