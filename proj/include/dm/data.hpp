#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dm/ot.hpp"
#include "dm/rng.hpp"
#include "dm/tensor.hpp"

namespace dm::data {

struct LabeledDataset {
  Tensor points;             // n x d, coordinates in [0, 1]
  std::vector<int> labels;   // 1..num_classes
  int num_classes = 0;
  std::string role;          // "source" or "target"

  int64_t size() const { return points.rows(); }
  int64_t dim() const { return points.cols(); }
  void validate() const;
};

// Gaussian mixture on the unit box: class means, shared isotropic spread,
// class probabilities. Samples are clipped into the box.
struct MixtureSpec {
  int64_t dim = 0;
  int num_classes = 0;
  Tensor means;                     // num_classes x dim, entries in [0, 1]
  std::vector<double> class_probs;  // empty means uniform
  double spread = 0.0;

  void validate() const;
};

LabeledDataset gen_mixture(const MixtureSpec& spec, int64_t n, const std::string& role,
                           RngStream& rng);

// Target-domain variant: means translated by mean_shift (must stay in the
// box) and optionally different class probabilities.
MixtureSpec shifted_spec(const MixtureSpec& base, const std::vector<double>& mean_shift,
                         const std::vector<double>& new_probs);

struct ShiftEstimate {
  double eps1 = 0.0;                  // max over classes of W1 between conditionals
  double eps2 = 0.0;                  // max over classes of |p_S(k) - p_T(k)|
  std::vector<double> per_class_w;    // class-conditional distances, index k-1
};

// Empirical shift between two labeled samples. Every class must appear on
// both sides; each side is capped at per_class_cap points per class (first
// occurrences, deterministic).
ShiftEstimate estimate_shift(const LabeledDataset& source, const LabeledDataset& target,
                             ot::CostKind kind, int64_t per_class_cap);

// CIFAR-10 binary batches: 3073-byte records (label byte + 3x32x32 pixels);
// pixels are scaled to [0, 1] and labels shifted to 1..10. `limit` caps the
// total loaded record count (0 means all).
LabeledDataset load_cifar10(const std::vector<std::string>& paths, int64_t limit,
                            const std::string& role);

}  // namespace dm::data
