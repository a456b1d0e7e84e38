#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dm/rng.hpp"
#include "dm/tensor.hpp"

namespace dm::aug {

enum class TransformKind {
  kIdentity,
  kGaussianNoise,     // frozen additive offset, drawn N(0, sigma^2) per coordinate
  kCoordinateScale,   // frozen per-coordinate factors, drawn U(lo, hi)
  kCoordinateMask,    // frozen 0/1 mask, zeroed with probability p
  kCropResize,        // images: frozen crop rectangle, bilinear resize back
  kHorizontalFlip,    // images: mirror width
};

TransformKind transform_kind_from_string(const std::string& s);
const char* transform_kind_name(TransformKind k);

// Config-level description; `count` frozen instances are drawn at build time.
struct TransformSpec {
  TransformKind kind = TransformKind::kIdentity;
  double param_a = 0.0;  // noise sigma / scale lo / mask prob / crop area lo
  double param_b = 0.0;  // scale hi / crop area hi
  int64_t count = 1;
};

struct ImageShape {
  int64_t channels = 0, height = 0, width = 0;
  bool valid() const { return channels >= 1 && height >= 1 && width >= 1; }
  int64_t dim() const { return channels * height * width; }
};

// Finite family of frozen deterministic maps on the unit box [0,1]^d; the
// identity is always member 0. All randomness is spent at construction, so
// applying a member is a pure function.
class AugmentationSet {
 public:
  AugmentationSet(int64_t dim, const std::vector<TransformSpec>& specs,
                  ImageShape image, uint64_t seed);

  int64_t size() const { return static_cast<int64_t>(members_.size()); }
  int64_t dim() const { return dim_; }
  TransformKind member_kind(int64_t idx) const { return members_[idx].kind; }

  // Applies member t to one row, clipping into [0,1].
  void apply(int64_t t, const double* x, double* out) const;
  Tensor apply_batch(int64_t t, const Tensor& batch) const;

  // All members applied to one point: size() x dim.
  Tensor all_views(const double* x) const;

  // Two independent uniformly-drawn members per row.
  std::pair<Tensor, Tensor> sample_views(const Tensor& batch, RngStream& rng) const;

  // Augmentation distance: min over member pairs (t1, t2) of
  // |A_t1(x1) - A_t2(x2)|_2. Zero for x1 == x2 (identity is a member).
  double view_distance(const double* x1, const double* x2) const;

 private:
  struct Member {
    TransformKind kind;
    std::vector<double> shift;    // gaussian noise
    std::vector<double> factors;  // coordinate scale
    std::vector<uint8_t> mask;    // coordinate mask
    int64_t top = 0, left = 0, crop_h = 0, crop_w = 0;  // crop-resize
  };
  int64_t dim_;
  ImageShape image_;
  std::vector<Member> members_;
};

struct SigmaDeltaRow {
  int cls = 0;
  double sigma = 0.0;
  double delta = 0.0;
  int64_t kept = 0;
  bool degenerate = false;  // class had < 2 points, delta 0 by definition
};

// For each class and each sigma in the grid, greedily discards the points
// with the largest worst-partner augmentation distance (ties broken toward
// the larger total distance, then the smaller index) until a ceil(sigma*n)
// fraction remains, and reports the augmentation diameter of what is kept.
// The elimination order is computed once per class, so main parts are nested
// and delta is monotone non-decreasing in sigma. The result upper-bounds the
// combinatorial optimum.
std::vector<SigmaDeltaRow> estimate_sigma_delta(const AugmentationSet& views,
                                                const Tensor& points,
                                                const std::vector<int>& labels,
                                                const std::vector<double>& sigma_grid);

// Empirical transform smoothness bound: max over members and sampled point
// pairs of |A(x1) - A(x2)| / |x1 - x2|. At least 1 whenever two sampled
// points differ (the identity member attains it).
double lipschitz_q_hat(const AugmentationSet& views, const Tensor& points,
                       int64_t num_pairs, RngStream& rng);

}  // namespace dm::aug
