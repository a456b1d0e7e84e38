#include "dm/augment.hpp"

#include <algorithm>
#include <cmath>

namespace dm::aug {

TransformKind transform_kind_from_string(const std::string& s) {
  if (s == "identity") return TransformKind::kIdentity;
  if (s == "gaussian_noise") return TransformKind::kGaussianNoise;
  if (s == "coordinate_scale") return TransformKind::kCoordinateScale;
  if (s == "coordinate_mask") return TransformKind::kCoordinateMask;
  if (s == "crop_resize") return TransformKind::kCropResize;
  if (s == "horizontal_flip") return TransformKind::kHorizontalFlip;
  fail(Status::InvalidArgument, "unknown transform kind '" + s + "'");
}

const char* transform_kind_name(TransformKind k) {
  switch (k) {
    case TransformKind::kIdentity: return "identity";
    case TransformKind::kGaussianNoise: return "gaussian_noise";
    case TransformKind::kCoordinateScale: return "coordinate_scale";
    case TransformKind::kCoordinateMask: return "coordinate_mask";
    case TransformKind::kCropResize: return "crop_resize";
    case TransformKind::kHorizontalFlip: return "horizontal_flip";
  }
  return "unknown";
}

AugmentationSet::AugmentationSet(int64_t dim, const std::vector<TransformSpec>& specs,
                                 ImageShape image, uint64_t seed)
    : dim_(dim), image_(image) {
  DM_REQUIRE(dim >= 1, InvalidArgument, "augmentation set needs dim >= 1");
  if (image_.valid())
    DM_REQUIRE(image_.dim() == dim, InvalidArgument,
               "image shape " << image_.channels << "x" << image_.height << "x"
                              << image_.width << " does not flatten to dim " << dim);
  members_.push_back({TransformKind::kIdentity});
  RngStream rng(seed, "augment/build");
  for (const auto& spec : specs) {
    DM_REQUIRE(spec.count >= 1, InvalidArgument, "transform count must be >= 1");
    for (int64_t c = 0; c < spec.count; ++c) {
      Member m;
      m.kind = spec.kind;
      switch (spec.kind) {
        case TransformKind::kIdentity:
          break;
        case TransformKind::kGaussianNoise: {
          DM_REQUIRE(spec.param_a >= 0.0, InvalidArgument,
                     "gaussian_noise sigma must be >= 0");
          m.shift.resize(dim);
          for (auto& v : m.shift) v = rng.normal(0.0, spec.param_a);
          break;
        }
        case TransformKind::kCoordinateScale: {
          DM_REQUIRE(spec.param_a <= spec.param_b, InvalidArgument,
                     "coordinate_scale needs lo <= hi");
          m.factors.resize(dim);
          for (auto& v : m.factors) v = rng.uniform(spec.param_a, spec.param_b);
          break;
        }
        case TransformKind::kCoordinateMask: {
          DM_REQUIRE(spec.param_a >= 0.0 && spec.param_a <= 1.0, InvalidArgument,
                     "coordinate_mask probability must lie in [0, 1]");
          m.mask.resize(dim);
          for (auto& v : m.mask) v = rng.uniform() < spec.param_a ? 0 : 1;
          break;
        }
        case TransformKind::kCropResize: {
          DM_REQUIRE(image_.valid(), InvalidArgument,
                     "crop_resize requires an image shape");
          DM_REQUIRE(spec.param_a > 0.0 && spec.param_a <= spec.param_b &&
                         spec.param_b <= 1.0,
                     InvalidArgument, "crop_resize needs 0 < area_lo <= area_hi <= 1");
          double area = rng.uniform(spec.param_a, spec.param_b) *
                        static_cast<double>(image_.height * image_.width);
          double aspect = rng.uniform(0.75, 4.0 / 3.0);
          auto clamp_dim = [](double v, int64_t hi) {
            return std::max<int64_t>(1, std::min<int64_t>(hi, llround(v)));
          };
          m.crop_h = clamp_dim(std::sqrt(area / aspect), image_.height);
          m.crop_w = clamp_dim(std::sqrt(area * aspect), image_.width);
          m.top = rng.uniform_int(image_.height - m.crop_h + 1);
          m.left = rng.uniform_int(image_.width - m.crop_w + 1);
          break;
        }
        case TransformKind::kHorizontalFlip:
          DM_REQUIRE(image_.valid(), InvalidArgument,
                     "horizontal_flip requires an image shape");
          break;
      }
      members_.push_back(std::move(m));
    }
  }
}

void AugmentationSet::apply(int64_t t, const double* x, double* out) const {
  DM_REQUIRE(t >= 0 && t < size(), InvalidArgument, "transform index " << t
                                                                       << " out of range");
  const Member& m = members_[static_cast<size_t>(t)];
  auto clip = [](double v) { return std::min(1.0, std::max(0.0, v)); };
  switch (m.kind) {
    case TransformKind::kIdentity:
      std::copy(x, x + dim_, out);
      break;
    case TransformKind::kGaussianNoise:
      for (int64_t k = 0; k < dim_; ++k) out[k] = clip(x[k] + m.shift[k]);
      break;
    case TransformKind::kCoordinateScale:
      for (int64_t k = 0; k < dim_; ++k) out[k] = clip(x[k] * m.factors[k]);
      break;
    case TransformKind::kCoordinateMask:
      for (int64_t k = 0; k < dim_; ++k) out[k] = m.mask[k] ? x[k] : 0.0;
      break;
    case TransformKind::kHorizontalFlip: {
      int64_t H = image_.height, W = image_.width;
      for (int64_t c = 0; c < image_.channels; ++c)
        for (int64_t r = 0; r < H; ++r)
          for (int64_t w = 0; w < W; ++w)
            out[(c * H + r) * W + w] = x[(c * H + r) * W + (W - 1 - w)];
      break;
    }
    case TransformKind::kCropResize: {
      int64_t H = image_.height, W = image_.width;
      // Bilinear resize of the frozen crop back to H x W, corner-aligned:
      // output corners sample crop corners, so a full-image crop is exact.
      double sy = H > 1 ? static_cast<double>(m.crop_h - 1) / static_cast<double>(H - 1)
                        : 0.0;
      double sx = W > 1 ? static_cast<double>(m.crop_w - 1) / static_cast<double>(W - 1)
                        : 0.0;
      for (int64_t c = 0; c < image_.channels; ++c) {
        const double* plane = x + c * H * W;
        double* oplane = out + c * H * W;
        for (int64_t r = 0; r < H; ++r) {
          double fy = std::min(static_cast<double>(m.crop_h - 1),
                               static_cast<double>(r) * sy);
          int64_t y0 = static_cast<int64_t>(fy);
          int64_t y1 = std::min(m.crop_h - 1, y0 + 1);
          double wy = fy - static_cast<double>(y0);
          for (int64_t w = 0; w < W; ++w) {
            double fx = std::min(static_cast<double>(m.crop_w - 1),
                                 static_cast<double>(w) * sx);
            int64_t x0 = static_cast<int64_t>(fx);
            int64_t x1 = std::min(m.crop_w - 1, x0 + 1);
            double wx = fx - static_cast<double>(x0);
            auto src = [&](int64_t yy, int64_t xx) {
              return plane[(m.top + yy) * W + (m.left + xx)];
            };
            oplane[r * W + w] = (1 - wy) * ((1 - wx) * src(y0, x0) + wx * src(y0, x1)) +
                                wy * ((1 - wx) * src(y1, x0) + wx * src(y1, x1));
          }
        }
      }
      break;
    }
  }
}

Tensor AugmentationSet::apply_batch(int64_t t, const Tensor& batch) const {
  DM_REQUIRE(batch.cols() == dim_, InvalidArgument,
             "batch has " << batch.cols() << " columns, set expects " << dim_);
  Tensor out(batch.rows(), dim_);
  for (int64_t r = 0; r < batch.rows(); ++r)
    apply(t, batch.data() + r * dim_, out.data() + r * dim_);
  return out;
}

Tensor AugmentationSet::all_views(const double* x) const {
  Tensor out(size(), dim_);
  for (int64_t t = 0; t < size(); ++t) apply(t, x, out.data() + t * dim_);
  return out;
}

std::pair<Tensor, Tensor> AugmentationSet::sample_views(const Tensor& batch,
                                                        RngStream& rng) const {
  DM_REQUIRE(batch.cols() == dim_, InvalidArgument,
             "batch has " << batch.cols() << " columns, set expects " << dim_);
  Tensor v1(batch.rows(), dim_), v2(batch.rows(), dim_);
  for (int64_t r = 0; r < batch.rows(); ++r) {
    int64_t t1 = rng.uniform_int(size());
    int64_t t2 = rng.uniform_int(size());
    apply(t1, batch.data() + r * dim_, v1.data() + r * dim_);
    apply(t2, batch.data() + r * dim_, v2.data() + r * dim_);
  }
  return {std::move(v1), std::move(v2)};
}

double AugmentationSet::view_distance(const double* x1, const double* x2) const {
  Tensor va = all_views(x1);
  Tensor vb = all_views(x2);
  double best = std::numeric_limits<double>::infinity();
  for (int64_t i = 0; i < va.rows(); ++i) {
    for (int64_t j = 0; j < vb.rows(); ++j) {
      double acc = 0.0;
      for (int64_t k = 0; k < dim_; ++k) {
        double t = va.at(i, k) - vb.at(j, k);
        acc += t * t;
      }
      best = std::min(best, acc);
    }
  }
  return std::sqrt(best);
}

std::vector<SigmaDeltaRow> estimate_sigma_delta(const AugmentationSet& views,
                                                const Tensor& points,
                                                const std::vector<int>& labels,
                                                const std::vector<double>& sigma_grid) {
  DM_REQUIRE(points.rows() == static_cast<int64_t>(labels.size()), InvalidArgument,
             "points and labels disagree: " << points.rows() << " vs " << labels.size());
  DM_REQUIRE(!sigma_grid.empty(), InvalidArgument, "sigma grid is empty");
  for (double s : sigma_grid)
    DM_REQUIRE(s > 0.0 && s <= 1.0, InvalidArgument,
               "sigma values must lie in (0, 1], got " << s);
  int max_label = 0;
  for (int l : labels) {
    DM_REQUIRE(l >= 1, InvalidArgument, "labels must be >= 1, got " << l);
    max_label = std::max(max_label, l);
  }

  std::vector<SigmaDeltaRow> rows;
  for (int cls = 1; cls <= max_label; ++cls) {
    std::vector<int64_t> idx;
    for (int64_t i = 0; i < points.rows(); ++i)
      if (labels[i] == cls) idx.push_back(i);
    if (idx.empty()) continue;
    int64_t n = static_cast<int64_t>(idx.size());
    DM_REQUIRE(n <= 2048, Budget,
               "class " << cls << " has " << n
                        << " points; the pairwise view-distance estimate is capped at 2048");
    // Pairwise augmentation distances.
    Tensor d(n, n, 0.0);
    for (int64_t a = 0; a < n; ++a) {
      for (int64_t b = a + 1; b < n; ++b) {
        double v = views.view_distance(points.data() + idx[a] * points.cols(),
                                       points.data() + idx[b] * points.cols());
        d.at(a, b) = v;
        d.at(b, a) = v;
      }
    }
    // Greedy elimination: repeatedly drop the survivor with the largest
    // worst-partner distance. Both ends of the current diameter tie on that
    // score, so ties fall to the larger total distance (the more isolated
    // point), then to the smaller index.
    std::vector<char> alive(n, 1);
    std::vector<int64_t> drop_order;
    for (int64_t round = 0; round + 1 < n; ++round) {
      int64_t worst = -1;
      double worst_far = -1.0, worst_sum = -1.0;
      for (int64_t a = 0; a < n; ++a) {
        if (!alive[a]) continue;
        double far = 0.0, sum = 0.0;
        for (int64_t b = 0; b < n; ++b) {
          if (!alive[b] || b == a) continue;
          far = std::max(far, d.at(a, b));
          sum += d.at(a, b);
        }
        if (far > worst_far || (far == worst_far && sum > worst_sum)) {
          worst_far = far;
          worst_sum = sum;
          worst = a;
        }
      }
      drop_order.push_back(worst);
      alive[worst] = 0;
    }
    for (int64_t a = 0; a < n; ++a)
      if (alive[a]) drop_order.push_back(a);  // the survivor
    // Prefix of the reversed drop order = main part candidates.
    std::vector<int64_t> keep_order(drop_order.rbegin(), drop_order.rend());
    for (double sigma : sigma_grid) {
      int64_t m = static_cast<int64_t>(std::ceil(sigma * static_cast<double>(n)));
      m = std::max<int64_t>(1, std::min(n, m));
      double delta = 0.0;
      for (int64_t a = 0; a < m; ++a)
        for (int64_t b = a + 1; b < m; ++b)
          delta = std::max(delta, d.at(keep_order[a], keep_order[b]));
      rows.push_back({cls, sigma, delta, m, n < 2});
    }
  }
  return rows;
}

double lipschitz_q_hat(const AugmentationSet& views, const Tensor& points,
                       int64_t num_pairs, RngStream& rng) {
  DM_REQUIRE(points.rows() >= 2, InvalidArgument, "smoothness probe needs >= 2 points");
  DM_REQUIRE(points.cols() == views.dim(), InvalidArgument,
             "points have " << points.cols() << " columns, set expects " << views.dim());
  DM_REQUIRE(num_pairs >= 1, InvalidArgument, "smoothness probe needs >= 1 pair");
  int64_t n = points.rows(), dim = views.dim();
  std::vector<double> va(dim), vb(dim);
  double best = 0.0;
  for (int64_t p = 0; p < num_pairs; ++p) {
    int64_t i = rng.uniform_int(n);
    int64_t j = rng.uniform_int(n);
    if (i == j) continue;
    double dx = 0.0;
    for (int64_t k = 0; k < dim; ++k) {
      double t = points.at(i, k) - points.at(j, k);
      dx += t * t;
    }
    if (dx <= 0.0) continue;
    for (int64_t t = 0; t < views.size(); ++t) {
      views.apply(t, points.data() + i * dim, va.data());
      views.apply(t, points.data() + j * dim, vb.data());
      double dv = 0.0;
      for (int64_t k = 0; k < dim; ++k) {
        double u = va[k] - vb[k];
        dv += u * u;
      }
      best = std::max(best, std::sqrt(dv / dx));
    }
  }
  return best;
}

}  // namespace dm::aug
