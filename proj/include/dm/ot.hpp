#pragma once

#include <cstdint>
#include <vector>

#include "dm/tensor.hpp"

namespace dm::ot {

enum class CostKind { kL1, kL2 };

CostKind cost_kind_from_string(const std::string& s);
const char* cost_kind_name(CostKind k);

// Weighted point cloud. Weights are validated to be non-negative and to sum
// to one (Kahan-summed, tolerance 1e-12).
struct DiscreteMeasure {
  Tensor points;                 // n x d
  std::vector<double> weights;   // length n

  static DiscreteMeasure uniform(Tensor points);
  static DiscreteMeasure weighted(Tensor points, std::vector<double> weights);

  int64_t size() const { return points.rows(); }
  int64_t dim() const { return points.cols(); }
  void validate() const;
};

// Transport plan between two measures, plus its transport cost
// <plan, ground_cost>. validate() enforces non-negativity, marginals within
// 1e-9 of the measure weights, and cost consistency within 1e-9.
struct Coupling {
  Tensor plan;  // n1 x n2
  double cost = 0.0;

  void validate(const DiscreteMeasure& mu, const DiscreteMeasure& nu, CostKind kind) const;
};

// Pairwise ground distances, n1 x n2.
Tensor ground_cost(const Tensor& a, const Tensor& b, CostKind kind);

// Exact Wasserstein-1 between discrete measures. Equal-size uniform inputs
// take an assignment fast path; the general case runs a transportation
// network simplex. Zero-weight atoms are dropped before solving and appear
// as zero rows/columns in the returned plan.
Coupling mallows_exact(const DiscreteMeasure& mu, const DiscreteMeasure& nu, CostKind kind);

struct SinkhornOptions {
  double reg = 1e-2;
  double tol = 1e-7;        // L1 marginal violation of the unrounded plan
  int64_t max_iters = 100000;
};

// Log-domain Sinkhorn with regularization annealing (the regularizer starts
// at the cost scale and halves down to opts.reg, warm-starting the
// potentials). The returned plan is rounded onto the transport polytope
// (exact marginals) and the cost is evaluated on the rounded plan. Raises
// Status::Numeric with the residual violation if it fails to converge.
Coupling sinkhorn(const DiscreteMeasure& mu, const DiscreteMeasure& nu, CostKind kind,
                  const SinkhornOptions& opts);

// Duality-gap form of the distribution-matching objective: mean critic value
// on reference draws minus mean critic value on representation draws.
// Representation values come in view pairs flattened to a single list, so the
// per-pair averaging reduces to a plain mean.
double dual_estimate(const std::vector<double>& critic_on_reference,
                     const std::vector<double>& critic_on_representations);

// Minimum-cost perfect assignment on a square cost matrix; returns the
// assigned column for each row. O(n^3), deterministic.
std::vector<int64_t> hungarian_min(const Tensor& cost);

// Label correspondence: permutation tau maximizing sum_k mass[k][tau[k]].
// Deterministic under ties (resolved by the assignment solver's fixed scan
// order, which settles fully tied matrices on the identity).
std::vector<int64_t> assign_labels(const Tensor& mass);

// Aggregates plan mass into class pairs: out[k][l] = total plan mass between
// source atoms labeled k+1 and reference atoms of part class l+1.
Tensor class_mass_matrix(const Coupling& coupling, const std::vector<int>& source_labels,
                         const std::vector<int>& reference_classes, int num_classes);

}  // namespace dm::ot
