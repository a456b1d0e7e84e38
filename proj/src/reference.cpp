#include "dm/reference.hpp"

#include <cmath>

namespace dm::reference {

std::vector<double> ReferenceSpec::center(int64_t part_id) const {
  DM_REQUIRE(part_id >= 1 && part_id <= k_prime, InvalidArgument,
             "part id " << part_id << " outside [1, " << k_prime << "]");
  std::vector<double> c(d_star, 0.0);
  c[part_id - 1] = static_cast<double>(signs[part_id - 1]);
  return c;
}

ReferenceSpec build_reference(int64_t k_prime, int64_t d_star, double radius,
                              double epsilon, std::vector<double> alphas, uint64_t seed) {
  DM_REQUIRE(k_prime >= 1, InvalidArgument, "need at least one part, got " << k_prime);
  DM_REQUIRE(k_prime <= d_star, InvalidArgument,
             "k_prime (" << k_prime << ") must not exceed d_star (" << d_star
                         << "): parts sit on distinct axes");
  DM_REQUIRE(radius > 0.0, InvalidArgument, "radius must be positive, got " << radius);
  DM_REQUIRE(epsilon > 0.0 && epsilon < 1.0, InvalidArgument,
             "epsilon must lie in (0, 1), got " << epsilon);
  if (alphas.empty()) {
    alphas.assign(k_prime, 1.0 / static_cast<double>(k_prime));
  }
  DM_REQUIRE(static_cast<int64_t>(alphas.size()) == k_prime, InvalidArgument,
             "got " << alphas.size() << " part probabilities for " << k_prime << " parts");
  double sum = 0.0;
  for (double a : alphas) {
    DM_REQUIRE(std::isfinite(a) && a >= 0.0, InvalidArgument,
               "part probabilities must be non-negative, got " << a);
    sum += a;
  }
  DM_REQUIRE(std::abs(sum - 1.0) <= 1e-9, InvalidArgument,
             "part probabilities sum to " << sum << ", expected 1");

  ReferenceSpec spec;
  spec.k_prime = k_prime;
  spec.d_star = d_star;
  spec.radius = radius;
  spec.epsilon = epsilon;
  spec.alphas = std::move(alphas);
  spec.seed = seed;
  RngStream signs_rng(seed, "reference/signs");
  spec.signs.resize(k_prime);
  for (int64_t i = 0; i < k_prime; ++i)
    spec.signs[i] = signs_rng.uniform() < 0.5 ? 1 : -1;
  return spec;
}

ReferenceBatch sample_reference(const ReferenceSpec& spec, int64_t n, RngStream& rng) {
  DM_REQUIRE(n >= 1, InvalidArgument, "need at least one sample, got " << n);
  DM_REQUIRE(spec.k_prime >= 1 &&
                 static_cast<int64_t>(spec.signs.size()) == spec.k_prime,
             InvalidArgument, "reference spec is not built");
  int64_t d = spec.d_star;
  ReferenceBatch batch;
  batch.points = Tensor(n, d);
  batch.part_ids.resize(n);
  std::vector<double> gamma(d);
  for (int64_t s = 0; s < n; ++s) {
    int64_t part = rng.categorical(spec.alphas);  // 0-indexed
    batch.part_ids[s] = static_cast<int>(part) + 1;
    double gnorm = 0.0;
    for (int64_t k = 0; k < d; ++k) {
      gamma[k] = rng.normal();
      gnorm += gamma[k] * gamma[k];
    }
    gnorm = std::sqrt(gnorm);
    DM_REQUIRE(gnorm > 0.0, Numeric, "degenerate gaussian draw");
    // u = center + epsilon * gamma / |gamma|, then project to the R-sphere.
    double unorm = 0.0;
    double* row = batch.points.data() + s * d;
    for (int64_t k = 0; k < d; ++k) {
      double u = spec.epsilon * gamma[k] / gnorm;
      if (k == part) u += static_cast<double>(spec.signs[part]);
      row[k] = u;
      unorm += u * u;
    }
    unorm = std::sqrt(unorm);
    for (int64_t k = 0; k < d; ++k) row[k] *= spec.radius / unorm;
  }
  return batch;
}

}  // namespace dm::reference
