#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dm/augment.hpp"
#include "support/test_util.hpp"

using dm::RngStream;
using dm::Status;
using dm::Tensor;
using dm::aug::AugmentationSet;
using dm::aug::ImageShape;
using dm::aug::TransformKind;
using dm::aug::TransformSpec;

namespace {

Tensor unit_box_points(RngStream& rng, int64_t n, int64_t d) {
  Tensor t(n, d);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform();
  return t;
}

double row_dist(const Tensor& a, int64_t i, const Tensor& b, int64_t j) {
  double acc = 0.0;
  for (int64_t k = 0; k < a.cols(); ++k) {
    double t = a.at(i, k) - b.at(j, k);
    acc += t * t;
  }
  return std::sqrt(acc);
}

}  // namespace

TEST_CASE("kind names round-trip and unknown names are rejected") {
  for (const char* name : {"identity", "gaussian_noise", "coordinate_scale",
                           "coordinate_mask", "crop_resize", "horizontal_flip"}) {
    CHECK(std::string(dm::aug::transform_kind_name(
              dm::aug::transform_kind_from_string(name))) == name);
  }
  CHECK_THROWS_AS(dm::aug::transform_kind_from_string("rotate"), dm::Error);
}

TEST_CASE("member zero is the identity") {
  AugmentationSet set(4, {{TransformKind::kGaussianNoise, 0.1, 0.0, 3}}, {}, 9);
  CHECK(set.size() == 4);
  CHECK(set.member_kind(0) == TransformKind::kIdentity);
  RngStream rng(2);
  Tensor x = unit_box_points(rng, 1, 4);
  Tensor out = set.apply_batch(0, x);
  for (int64_t i = 0; i < x.size(); ++i) CHECK(out[i] == x[i]);
}

TEST_CASE("members are frozen functions, deterministic in the seed") {
  std::vector<TransformSpec> specs = {{TransformKind::kGaussianNoise, 0.05, 0.0, 2},
                                      {TransformKind::kCoordinateScale, 0.8, 1.2, 2},
                                      {TransformKind::kCoordinateMask, 0.3, 0.0, 2}};
  AugmentationSet a(6, specs, {}, 42);
  AugmentationSet b(6, specs, {}, 42);
  AugmentationSet c(6, specs, {}, 43);
  RngStream rng(4);
  Tensor x = unit_box_points(rng, 3, 6);
  bool same = true, any_diff = false;
  for (int64_t t = 0; t < a.size(); ++t) {
    Tensor oa = a.apply_batch(t, x), ob = b.apply_batch(t, x), oc = c.apply_batch(t, x);
    for (int64_t i = 0; i < oa.size(); ++i) {
      same = same && oa[i] == ob[i];
      any_diff = any_diff || oa[i] != oc[i];
    }
    // Re-applying the same member is a pure function call.
    Tensor again = a.apply_batch(t, x);
    for (int64_t i = 0; i < oa.size(); ++i) CHECK(again[i] == oa[i]);
  }
  CHECK(same);
  CHECK(any_diff);
}

TEST_CASE("gaussian noise is a fixed translation away from the clip boundary") {
  AugmentationSet set(5, {{TransformKind::kGaussianNoise, 0.01, 0.0, 1}}, {}, 7);
  Tensor x1(1, 5, 0.5), x2(1, 5, 0.4);
  Tensor o1 = set.apply_batch(1, x1), o2 = set.apply_batch(1, x2);
  for (int64_t k = 0; k < 5; ++k)
    CHECK(o1.at(0, k) - x1.at(0, k) ==
          doctest::Approx(o2.at(0, k) - x2.at(0, k)).epsilon(1e-12));
}

TEST_CASE("outputs are clipped into the unit box") {
  AugmentationSet set(8, {{TransformKind::kGaussianNoise, 5.0, 0.0, 4},
                          {TransformKind::kCoordinateScale, 0.0, 3.0, 4}},
                      {}, 77);
  RngStream rng(8);
  Tensor x = unit_box_points(rng, 4, 8);
  for (int64_t t = 0; t < set.size(); ++t) {
    Tensor out = set.apply_batch(t, x);
    for (int64_t i = 0; i < out.size(); ++i) {
      CHECK(out[i] >= 0.0);
      CHECK(out[i] <= 1.0);
    }
  }
}

TEST_CASE("coordinate scale multiplies by frozen in-range factors") {
  AugmentationSet set(6, {{TransformKind::kCoordinateScale, 0.5, 0.9, 1}}, {}, 5);
  Tensor x(1, 6, 0.5);
  Tensor out = set.apply_batch(1, x);
  for (int64_t k = 0; k < 6; ++k) {
    double factor = out.at(0, k) / 0.5;
    CHECK(factor >= 0.5);
    CHECK(factor <= 0.9);
  }
  // Same factors at a different input value (no clipping in range).
  Tensor y(1, 6, 1.0);
  Tensor oy = set.apply_batch(1, y);
  for (int64_t k = 0; k < 6; ++k)
    CHECK(oy.at(0, k) == doctest::Approx(2.0 * out.at(0, k)).epsilon(1e-12));
}

TEST_CASE("coordinate mask zeroes a frozen subset") {
  AugmentationSet set(64, {{TransformKind::kCoordinateMask, 0.5, 0.0, 1}}, {}, 19);
  Tensor x(1, 64, 0.7), y(1, 64, 0.3);
  Tensor ox = set.apply_batch(1, x), oy = set.apply_batch(1, y);
  int64_t zeros = 0;
  for (int64_t k = 0; k < 64; ++k) {
    bool zeroed = ox.at(0, k) == 0.0;
    CHECK(ox.at(0, k) == (zeroed ? 0.0 : 0.7));
    CHECK(oy.at(0, k) == (zeroed ? 0.0 : 0.3));  // same coordinates both times
    zeros += zeroed ? 1 : 0;
  }
  CHECK(zeros > 10);
  CHECK(zeros < 54);
}

TEST_CASE("horizontal flip mirrors width and is an involution") {
  ImageShape img{2, 3, 4};
  AugmentationSet set(img.dim(), {{TransformKind::kHorizontalFlip, 0, 0, 1}}, img, 3);
  RngStream rng(12);
  Tensor x = unit_box_points(rng, 2, img.dim());
  Tensor flipped = set.apply_batch(1, x);
  for (int64_t c = 0; c < 2; ++c)
    for (int64_t r = 0; r < 3; ++r)
      for (int64_t w = 0; w < 4; ++w)
        CHECK(flipped.at(0, (c * 3 + r) * 4 + w) == x.at(0, (c * 3 + r) * 4 + (3 - w)));
  Tensor twice = set.apply_batch(1, flipped);
  for (int64_t i = 0; i < x.size(); ++i) CHECK(twice[i] == x[i]);
}

TEST_CASE("crop-resize preserves constants and the input range") {
  ImageShape img{3, 8, 8};
  AugmentationSet set(img.dim(), {{TransformKind::kCropResize, 0.4, 0.9, 5}}, img, 23);
  Tensor flat(1, img.dim(), 0.37);
  for (int64_t t = 1; t < set.size(); ++t) {
    Tensor out = set.apply_batch(t, flat);
    for (int64_t i = 0; i < out.size(); ++i)
      CHECK(out[i] == doctest::Approx(0.37).epsilon(1e-12));
  }
  RngStream rng(6);
  Tensor x = unit_box_points(rng, 1, img.dim());
  double lo = 1.0, hi = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) {
    lo = std::min(lo, x[i]);
    hi = std::max(hi, x[i]);
  }
  for (int64_t t = 1; t < set.size(); ++t) {
    Tensor out = set.apply_batch(t, x);
    for (int64_t i = 0; i < out.size(); ++i) {
      CHECK(out[i] >= lo - 1e-12);  // bilinear interpolation is a convex blend
      CHECK(out[i] <= hi + 1e-12);
    }
  }
}

TEST_CASE("image transforms require an image shape") {
  CHECK_THROWS_AS(
      AugmentationSet(8, {{TransformKind::kHorizontalFlip, 0, 0, 1}}, {}, 1), dm::Error);
  CHECK_THROWS_AS(AugmentationSet(8, {{TransformKind::kCropResize, 0.5, 0.9, 1}}, {}, 1),
                  dm::Error);
  // Shape that does not flatten to dim.
  CHECK_THROWS_AS(
      AugmentationSet(7, {{TransformKind::kHorizontalFlip, 0, 0, 1}}, {1, 2, 4}, 1),
      dm::Error);
}

TEST_CASE("sampled views are members of the set") {
  AugmentationSet set(5, {{TransformKind::kGaussianNoise, 0.1, 0.0, 3},
                          {TransformKind::kCoordinateScale, 0.7, 1.3, 2}},
                      {}, 31);
  RngStream data_rng(14);
  Tensor batch = unit_box_points(data_rng, 8, 5);
  RngStream rng(15);
  auto [v1, v2] = set.sample_views(batch, rng);
  REQUIRE(v1.rows() == 8);
  REQUIRE(v2.rows() == 8);
  bool differ = false;
  for (int64_t r = 0; r < 8; ++r) {
    Tensor views = set.all_views(batch.data() + r * 5);
    auto matches = [&](const Tensor& v) {
      for (int64_t t = 0; t < views.rows(); ++t) {
        bool eq = true;
        for (int64_t k = 0; k < 5; ++k) eq = eq && views.at(t, k) == v.at(r, k);
        if (eq) return true;
      }
      return false;
    };
    CHECK(matches(v1));
    CHECK(matches(v2));
    for (int64_t k = 0; k < 5; ++k) differ = differ || v1.at(r, k) != v2.at(r, k);
  }
  CHECK(differ);  // 16 independent draws from 6 members collide everywhere with prob 6^-8
}

TEST_CASE("view distance reduces to the euclidean distance for identity-only sets") {
  AugmentationSet set(3, {}, {}, 1);
  CHECK(set.size() == 1);
  RngStream rng(44);
  Tensor pts = unit_box_points(rng, 5, 3);
  for (int64_t i = 0; i < 5; ++i)
    for (int64_t j = 0; j < 5; ++j)
      CHECK(set.view_distance(pts.data() + i * 3, pts.data() + j * 3) ==
            doctest::Approx(row_dist(pts, i, pts, j)).epsilon(1e-12));
}

TEST_CASE("view distance vanishes on augmentation orbits and stays symmetric") {
  ImageShape img{1, 2, 4};
  AugmentationSet set(img.dim(), {{TransformKind::kHorizontalFlip, 0, 0, 1}}, img, 2);
  RngStream rng(3);
  Tensor x = unit_box_points(rng, 1, img.dim());
  Tensor flipped = set.apply_batch(1, x);
  CHECK(set.view_distance(x.data(), flipped.data()) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(set.view_distance(x.data(), x.data()) == 0.0);
  Tensor y = unit_box_points(rng, 1, img.dim());
  CHECK(set.view_distance(x.data(), y.data()) ==
        doctest::Approx(set.view_distance(y.data(), x.data())).epsilon(1e-12));
  // Never larger than the raw distance: the identity pair is a candidate.
  CHECK(set.view_distance(x.data(), y.data()) <= row_dist(x, 0, y, 0) + 1e-12);
}

TEST_CASE("sigma-delta on collinear points matches hand geometry") {
  AugmentationSet set(1, {}, {}, 1);
  Tensor pts(5, 1);
  for (int64_t i = 0; i < 5; ++i) pts.at(i, 0) = 0.1 * static_cast<double>(i);
  std::vector<int> labels(5, 1);
  auto rows = dm::aug::estimate_sigma_delta(set, pts, labels, {0.5, 1.0});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].cls == 1);
  CHECK(rows[0].sigma == 0.5);
  CHECK(rows[0].kept == 3);  // ceil(0.5 * 5)
  // The kept 3-subset of equally spaced points spans at most 0.2.
  CHECK(rows[0].delta == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(rows[1].kept == 5);
  CHECK(rows[1].delta == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("greedy elimination discards outliers first") {
  AugmentationSet set(1, {}, {}, 1);
  Tensor pts(6, 1);
  double vals[6] = {0.0, 0.01, 0.02, 0.03, 0.6, 1.0};
  for (int64_t i = 0; i < 6; ++i) pts.at(i, 0) = vals[i];
  std::vector<int> labels(6, 1);
  auto rows = dm::aug::estimate_sigma_delta(set, pts, labels, {0.6});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].kept == 4);
  CHECK(rows[0].delta == doctest::Approx(0.03).epsilon(1e-12));
  CHECK_FALSE(rows[0].degenerate);
}

TEST_CASE("greedy delta is bounded by the exhaustive optimum and the class diameter") {
  AugmentationSet set(2, {{TransformKind::kGaussianNoise, 0.02, 0.0, 2}}, {}, 9);
  RngStream rng(27);
  Tensor pts = unit_box_points(rng, 6, 2);
  std::vector<int> labels(6, 1);
  int64_t n = 6, m = 4;
  // Exhaustive: the smallest view-distance diameter over all 4-subsets.
  Tensor d(n, n, 0.0);
  for (int64_t a = 0; a < n; ++a)
    for (int64_t b = a + 1; b < n; ++b) {
      double v = set.view_distance(pts.data() + a * 2, pts.data() + b * 2);
      d.at(a, b) = d.at(b, a) = v;
    }
  double exact = 1e300, full = 0.0;
  for (int64_t mask = 0; mask < 64; ++mask) {
    if (__builtin_popcountll(mask) != m) continue;
    double diam = 0.0;
    for (int64_t a = 0; a < n; ++a)
      for (int64_t b = a + 1; b < n; ++b)
        if ((mask >> a & 1) && (mask >> b & 1)) diam = std::max(diam, d.at(a, b));
    exact = std::min(exact, diam);
  }
  for (int64_t a = 0; a < n; ++a)
    for (int64_t b = a + 1; b < n; ++b) full = std::max(full, d.at(a, b));
  auto rows = dm::aug::estimate_sigma_delta(set, pts, labels, {0.6});
  REQUIRE(rows.size() == 1);
  REQUIRE(rows[0].kept == 4);
  CHECK(rows[0].delta >= exact - 1e-12);
  CHECK(rows[0].delta <= full + 1e-12);
}

TEST_CASE("delta grows with sigma and classes produce nested main parts") {
  AugmentationSet set(3, {{TransformKind::kCoordinateScale, 0.9, 1.1, 2}}, {}, 13);
  RngStream rng(50);
  Tensor pts = unit_box_points(rng, 24, 3);
  std::vector<int> labels(24);
  for (int64_t i = 0; i < 24; ++i) labels[i] = i % 2 == 0 ? 1 : 3;  // class 2 is absent
  std::vector<double> grid = {0.25, 0.5, 0.75, 1.0};
  auto rows = dm::aug::estimate_sigma_delta(set, pts, labels, grid);
  REQUIRE(rows.size() == 8);  // two populated classes x four sigmas
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].cls == (i < 4 ? 1 : 3));
    if (i % 4 != 0) {
      CHECK(rows[i].delta >= rows[i - 1].delta);
      CHECK(rows[i].kept >= rows[i - 1].kept);
    }
  }
}

TEST_CASE("a full-image crop with corner alignment is the exact identity") {
  // With a 2x2 image the rounded crop dimensions are pinned to 2 for every
  // aspect draw, so area 1 forces the full-image crop.
  ImageShape img{1, 2, 2};
  AugmentationSet set(img.dim(), {{TransformKind::kCropResize, 1.0, 1.0, 3}}, img, 17);
  RngStream rng(20);
  Tensor x = unit_box_points(rng, 2, img.dim());
  for (int64_t t = 1; t < set.size(); ++t) {
    Tensor out = set.apply_batch(t, x);
    for (int64_t i = 0; i < x.size(); ++i) CHECK(out[i] == x[i]);
  }
}

TEST_CASE("singleton classes report zero delta with the degenerate flag") {
  AugmentationSet set(2, {}, {}, 1);
  Tensor pts(3, 2, 0.0);
  pts.at(1, 0) = 0.5;
  pts.at(2, 0) = 1.0;
  std::vector<int> labels = {1, 2, 2};
  auto rows = dm::aug::estimate_sigma_delta(set, pts, labels, {1.0});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].cls == 1);
  CHECK(rows[0].delta == 0.0);
  CHECK(rows[0].kept == 1);
  CHECK(rows[0].degenerate);
  CHECK(rows[1].cls == 2);
  CHECK(rows[1].delta == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_FALSE(rows[1].degenerate);
}

TEST_CASE("transform smoothness probe brackets the scale factors") {
  AugmentationSet id_only(3, {}, {}, 1);
  RngStream rng(61);
  Tensor pts = unit_box_points(rng, 10, 3);
  RngStream probe_rng(62);
  CHECK(dm::aug::lipschitz_q_hat(id_only, pts, 128, probe_rng) ==
        doctest::Approx(1.0).epsilon(1e-12));

  // Interior points under pure coordinate scaling: ratios stay within the
  // factor range, and the identity member keeps the probe at >= 1.
  AugmentationSet scaled(3, {{TransformKind::kCoordinateScale, 2.0, 3.0, 4}}, {}, 5);
  Tensor interior(6, 3);
  for (int64_t i = 0; i < interior.size(); ++i)
    interior[i] = 0.05 + 0.25 * rng.uniform();  // keeps 3x within the box
  RngStream probe2(63);
  double q = dm::aug::lipschitz_q_hat(scaled, interior, 256, probe2);
  CHECK(q >= 2.0 - 1e-12);
  CHECK(q <= 3.0 + 1e-12);
}

TEST_CASE("sigma-delta validates its inputs") {
  AugmentationSet set(2, {}, {}, 1);
  Tensor pts(3, 2, 0.5);
  CHECK_THROWS_AS(dm::aug::estimate_sigma_delta(set, pts, {1, 1}, {0.5}), dm::Error);
  CHECK_THROWS_AS(dm::aug::estimate_sigma_delta(set, pts, {1, 1, 1}, {}), dm::Error);
  CHECK_THROWS_AS(dm::aug::estimate_sigma_delta(set, pts, {1, 1, 1}, {1.5}), dm::Error);
  CHECK_THROWS_AS(dm::aug::estimate_sigma_delta(set, pts, {1, 0, 1}, {0.5}), dm::Error);
  try {
    Tensor big(2049, 1, 0.5);
    std::vector<int> labels(2049, 1);
    AugmentationSet tiny(1, {}, {}, 1);
    dm::aug::estimate_sigma_delta(tiny, big, labels, {0.5});
    FAIL("expected a budget error");
  } catch (const dm::Error& e) {
    CHECK(e.status() == Status::Budget);
  }
}
