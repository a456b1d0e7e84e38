#pragma once

#include <cstdint>
#include <vector>

#include "dm/rng.hpp"
#include "dm/tensor.hpp"

namespace dm::reference {

// Structured target distribution on the radius-R sphere in R^{d_star}:
// k_prime parts, part i centered at sign_i * R * e_i, each part a cap of
// angular radius arcsin(epsilon) around its center. Signs are drawn once at
// build time from the seed, so a spec is fully reproducible from
// (dims, radius, epsilon, alphas, seed).
struct ReferenceSpec {
  int64_t k_prime = 0;
  int64_t d_star = 0;
  double radius = 1.0;
  double epsilon = 1e-3;
  std::vector<double> alphas;  // part probabilities, length k_prime
  uint64_t seed = 0;
  std::vector<int> signs;      // +1 / -1 per part

  // Unit center direction of 1-indexed part.
  std::vector<double> center(int64_t part_id) const;
};

// Validates dimensions and probabilities; empty alphas means uniform.
ReferenceSpec build_reference(int64_t k_prime, int64_t d_star, double radius,
                              double epsilon, std::vector<double> alphas, uint64_t seed);

struct ReferenceBatch {
  Tensor points;              // n x d_star, rows have norm R
  std::vector<int> part_ids;  // 1..k_prime
};

// Draws n points: part ~ Categorical(alphas), direction = normalize(center +
// epsilon * unit gaussian), scaled to radius R.
ReferenceBatch sample_reference(const ReferenceSpec& spec, int64_t n, RngStream& rng);

}  // namespace dm::reference
