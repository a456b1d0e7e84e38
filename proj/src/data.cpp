#include "dm/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace dm::data {

void LabeledDataset::validate() const {
  DM_REQUIRE(points.rows() == static_cast<int64_t>(labels.size()), InvalidArgument,
             "dataset has " << points.rows() << " points but " << labels.size()
                            << " labels");
  DM_REQUIRE(num_classes >= 1, InvalidArgument, "dataset needs num_classes >= 1");
  for (int l : labels)
    DM_REQUIRE(l >= 1 && l <= num_classes, InvalidArgument,
               "label " << l << " outside [1, " << num_classes << "]");
  points.require_finite("dataset points");
}

void MixtureSpec::validate() const {
  DM_REQUIRE(dim >= 1, Validation, "data.dim must be >= 1");
  DM_REQUIRE(num_classes >= 1, Validation, "data.num_classes must be >= 1");
  DM_REQUIRE(means.rows() == num_classes && means.cols() == dim, Validation,
             "data.class_means must be num_classes x dim, got " << means.rows() << "x"
                                                                << means.cols());
  for (int64_t i = 0; i < means.size(); ++i)
    DM_REQUIRE(means[i] >= 0.0 && means[i] <= 1.0, Validation,
               "data.class_means entries must lie in [0, 1], got " << means[i]);
  if (!class_probs.empty()) {
    DM_REQUIRE(static_cast<int>(class_probs.size()) == num_classes, Validation,
               "data.class_probs size " << class_probs.size() << " != num_classes "
                                        << num_classes);
    double s = 0.0;
    for (double p : class_probs) {
      DM_REQUIRE(p >= 0.0, Validation, "data.class_probs entries must be >= 0");
      s += p;
    }
    DM_REQUIRE(std::abs(s - 1.0) <= 1e-9, Validation,
               "data.class_probs sum to " << s << ", expected 1");
  }
  DM_REQUIRE(spread >= 0.0, Validation, "data.spread must be >= 0");
}

LabeledDataset gen_mixture(const MixtureSpec& spec, int64_t n, const std::string& role,
                           RngStream& rng) {
  spec.validate();
  DM_REQUIRE(n >= 1, InvalidArgument, "need n >= 1 samples");
  std::vector<double> probs = spec.class_probs;
  if (probs.empty())
    probs.assign(spec.num_classes, 1.0 / static_cast<double>(spec.num_classes));
  LabeledDataset out;
  out.points = Tensor(n, spec.dim);
  out.labels.resize(n);
  out.num_classes = spec.num_classes;
  out.role = role;
  for (int64_t i = 0; i < n; ++i) {
    int64_t k = rng.categorical(probs);
    out.labels[i] = static_cast<int>(k) + 1;
    double* row = out.points.data() + i * spec.dim;
    for (int64_t c = 0; c < spec.dim; ++c) {
      double v = spec.means.at(k, c) + spec.spread * rng.normal();
      row[c] = std::min(1.0, std::max(0.0, v));
    }
  }
  return out;
}

MixtureSpec shifted_spec(const MixtureSpec& base, const std::vector<double>& mean_shift,
                         const std::vector<double>& new_probs) {
  base.validate();
  MixtureSpec out = base;
  if (!mean_shift.empty()) {
    DM_REQUIRE(static_cast<int64_t>(mean_shift.size()) == base.dim, Validation,
               "data.target.mean_shift has " << mean_shift.size() << " entries, expected "
                                             << base.dim);
    for (int64_t k = 0; k < out.means.rows(); ++k)
      for (int64_t c = 0; c < out.means.cols(); ++c) {
        double v = out.means.at(k, c) + mean_shift[c];
        DM_REQUIRE(v >= 0.0 && v <= 1.0, Validation,
                   "data.target.mean_shift pushes class " << k + 1
                                                          << " outside the unit box");
        out.means.at(k, c) = v;
      }
  }
  if (!new_probs.empty()) out.class_probs = new_probs;
  out.validate();
  return out;
}

ShiftEstimate estimate_shift(const LabeledDataset& source, const LabeledDataset& target,
                             ot::CostKind kind, int64_t per_class_cap) {
  source.validate();
  target.validate();
  DM_REQUIRE(source.dim() == target.dim(), InvalidArgument,
             "source dim " << source.dim() << " != target dim " << target.dim());
  DM_REQUIRE(source.num_classes == target.num_classes, InvalidArgument,
             "class count mismatch: " << source.num_classes << " vs "
                                      << target.num_classes);
  DM_REQUIRE(per_class_cap >= 1, InvalidArgument, "per_class_cap must be >= 1");
  int K = source.num_classes;
  ShiftEstimate est;
  est.per_class_w.resize(K, 0.0);
  for (int cls = 1; cls <= K; ++cls) {
    auto gather = [&](const LabeledDataset& ds) {
      std::vector<int64_t> idx;
      for (int64_t i = 0; i < ds.size() &&
                          static_cast<int64_t>(idx.size()) < per_class_cap;
           ++i)
        if (ds.labels[i] == cls) idx.push_back(i);
      return idx;
    };
    auto is_ = gather(source);
    auto it_ = gather(target);
    DM_REQUIRE(!is_.empty(), InvalidArgument,
               "class " << cls << " has no source points");
    DM_REQUIRE(!it_.empty(), InvalidArgument,
               "class " << cls << " has no target points");
    Tensor ps(static_cast<int64_t>(is_.size()), source.dim());
    Tensor pt(static_cast<int64_t>(it_.size()), target.dim());
    for (size_t i = 0; i < is_.size(); ++i)
      for (int64_t c = 0; c < source.dim(); ++c)
        ps.at(static_cast<int64_t>(i), c) = source.points.at(is_[i], c);
    for (size_t i = 0; i < it_.size(); ++i)
      for (int64_t c = 0; c < target.dim(); ++c)
        pt.at(static_cast<int64_t>(i), c) = target.points.at(it_[i], c);
    double w = ot::mallows_exact(ot::DiscreteMeasure::uniform(ps),
                                 ot::DiscreteMeasure::uniform(pt), kind)
                   .cost;
    est.per_class_w[cls - 1] = w;
    est.eps1 = std::max(est.eps1, w);
  }
  for (int cls = 1; cls <= K; ++cls) {
    double fs = 0.0, ft = 0.0;
    for (int l : source.labels) fs += l == cls ? 1.0 : 0.0;
    for (int l : target.labels) ft += l == cls ? 1.0 : 0.0;
    fs /= static_cast<double>(source.size());
    ft /= static_cast<double>(target.size());
    est.eps2 = std::max(est.eps2, std::abs(fs - ft));
  }
  return est;
}

LabeledDataset load_cifar10(const std::vector<std::string>& paths, int64_t limit,
                            const std::string& role) {
  DM_REQUIRE(!paths.empty(), InvalidArgument, "no CIFAR-10 batch files given");
  constexpr int64_t kRecord = 3073;
  constexpr int64_t kPixels = 3072;
  std::vector<uint8_t> buffer;
  LabeledDataset out;
  out.num_classes = 10;
  out.role = role;
  std::vector<double> points;
  std::vector<int> labels;
  for (const auto& path : paths) {
    std::ifstream f(path, std::ios::binary);
    DM_REQUIRE(f.good(), Io, "cannot open CIFAR-10 batch '" << path << "'");
    buffer.assign((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    int64_t sz = static_cast<int64_t>(buffer.size());
    DM_REQUIRE(sz % kRecord == 0, Io,
               "'" << path << "' is not a whole number of 3073-byte records; "
                   << "trailing partial record starts at byte " << (sz / kRecord) * kRecord);
    int64_t records = sz / kRecord;
    for (int64_t r = 0; r < records; ++r) {
      if (limit > 0 && static_cast<int64_t>(labels.size()) >= limit) break;
      const uint8_t* rec = buffer.data() + r * kRecord;
      DM_REQUIRE(rec[0] <= 9, Io,
                 "'" << path << "' record " << r << " has label byte " << int(rec[0]));
      labels.push_back(int(rec[0]) + 1);
      for (int64_t k = 0; k < kPixels; ++k)
        points.push_back(static_cast<double>(rec[1 + k]) / 255.0);
    }
    if (limit > 0 && static_cast<int64_t>(labels.size()) >= limit) break;
  }
  DM_REQUIRE(!labels.empty(), Io, "no CIFAR-10 records loaded");
  out.points = Tensor(static_cast<int64_t>(labels.size()), kPixels, std::move(points));
  out.labels = std::move(labels);
  out.validate();
  return out;
}

}  // namespace dm::data
