#include "dm/nn.hpp"

#include <cmath>

namespace dm::nn {

void StackConfig::validate() const {
  DM_REQUIRE(input_dim >= 1, Validation, "network.input_dim must be >= 1");
  DM_REQUIRE(d_star >= 1, Validation, "network.d_star must be >= 1");
  for (int64_t h : encoder_hidden)
    DM_REQUIRE(h >= 1, Validation, "network.encoder_hidden entries must be >= 1");
  DM_REQUIRE(head_hidden >= 0, Validation, "network.head_hidden must be >= 0");
  for (int64_t h : critic_hidden)
    DM_REQUIRE(h >= 1, Validation, "network.critic_hidden entries must be >= 1");
  DM_REQUIRE(radius > 0.0, Validation, "network.radius must be positive");
  DM_REQUIRE(leaky_slope >= 0.0 && leaky_slope < 1.0, Validation,
             "network.leaky_slope must lie in [0, 1)");
  DM_REQUIRE(ln_eps > 0.0, Validation, "network.ln_eps must be positive");
}

NodeId sphere_normalize(Graph& g, NodeId x, double radius) {
  int64_t d = g.value(x).cols();
  // sqrt(max(|x|^2, 1e-24)) equals max(|x|, 1e-12) and keeps the gradient
  // finite (exactly zero) at the degenerate all-zero row.
  NodeId norms = g.sqrt_op(g.max_scalar(g.row_sumsq(x), 1e-24));
  return g.scale(g.div(x, g.bcast_col(norms, d)), radius);
}

namespace {

Tensor he_uniform(RngStream& rng, int64_t out_dim, int64_t in_dim) {
  double limit = std::sqrt(6.0 / static_cast<double>(in_dim));
  Tensor w(out_dim, in_dim);
  for (int64_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-limit, limit);
  return w;
}

}  // namespace

void EncoderStack::allocate(RngStream* init_rng) {
  auto make_weight = [&](int64_t out_dim, int64_t in_dim) {
    return init_rng ? he_uniform(*init_rng, out_dim, in_dim)
                    : Tensor(out_dim, in_dim, 0.0);
  };
  auto add_affine = [&](ParamStore& store, const std::string& prefix, int64_t out_dim,
                        int64_t in_dim) {
    Layer l;
    l.w = store.add(prefix + "/W", make_weight(out_dim, in_dim));
    l.b = store.add(prefix + "/b", Tensor(1, out_dim, 0.0));
    return l;
  };

  std::vector<int64_t> enc_widths = {cfg_.input_dim};
  for (int64_t h : cfg_.encoder_hidden) enc_widths.push_back(h);
  enc_widths.push_back(cfg_.d_star);
  for (size_t i = 0; i + 1 < enc_widths.size(); ++i) {
    encoder_layers_.push_back(add_affine(enc_params_, "encoder/" + std::to_string(i),
                                         enc_widths[i + 1], enc_widths[i]));
  }
  if (cfg_.head_hidden > 0) {
    head_layers_.push_back(add_affine(enc_params_, "head/0", cfg_.head_hidden, cfg_.d_star));
    head_layers_.push_back(add_affine(enc_params_, "head/1", cfg_.d_star, cfg_.head_hidden));
  }

  std::vector<int64_t> critic_widths = {cfg_.d_star};
  for (int64_t h : cfg_.critic_hidden) critic_widths.push_back(h);
  critic_widths.push_back(1);
  for (size_t i = 0; i + 1 < critic_widths.size(); ++i) {
    std::string prefix = "critic/" + std::to_string(i);
    Layer l = add_affine(critic_params_, prefix, critic_widths[i + 1], critic_widths[i]);
    if (i + 2 < critic_widths.size()) {  // hidden layers carry layer norm
      l.ln_gain = critic_params_.add(prefix + "/ln_gain", Tensor(1, critic_widths[i + 1], 1.0));
      l.ln_bias = critic_params_.add(prefix + "/ln_bias", Tensor(1, critic_widths[i + 1], 0.0));
    }
    critic_layers_.push_back(l);
  }
}

EncoderStack::EncoderStack(StackConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  RngStream init_rng(seed, "init");
  allocate(&init_rng);
}

EncoderStack EncoderStack::from_params(StackConfig cfg, const ParamStore& all) {
  cfg.validate();
  EncoderStack stack;
  stack.cfg_ = std::move(cfg);
  stack.allocate(nullptr);
  int64_t expected = stack.enc_params_.count() + stack.critic_params_.count();
  DM_REQUIRE(all.count() == expected, Validation,
             "checkpoint holds " << all.count() << " parameters, expected " << expected);
  auto fill = [&](ParamStore& store) {
    for (int64_t i = 0; i < store.count(); ++i) {
      const std::string& name = store.name(i);
      DM_REQUIRE(all.has(name), Validation, "checkpoint is missing parameter '" << name << "'");
      const Tensor& src = all.value(name);
      DM_REQUIRE(src.same_shape(store.value(i)), Validation,
                 "checkpoint parameter '" << name << "' has shape " << src.rows() << "x"
                                          << src.cols() << ", expected "
                                          << store.value(i).rows() << "x"
                                          << store.value(i).cols());
      store.value(i) = src;
    }
  };
  fill(stack.enc_params_);
  fill(stack.critic_params_);
  return stack;
}

ParamStore EncoderStack::merged_params() const {
  ParamStore all;
  for (int64_t i = 0; i < enc_params_.count(); ++i)
    all.add(enc_params_.name(i), enc_params_.value(i));
  for (int64_t i = 0; i < critic_params_.count(); ++i)
    all.add(critic_params_.name(i), critic_params_.value(i));
  return all;
}

EncoderStack::Bound EncoderStack::bind(Graph& g, bool train_encoder,
                                       bool train_critic) const {
  Bound b;
  b.enc.reserve(enc_params_.count());
  for (int64_t i = 0; i < enc_params_.count(); ++i) {
    const Tensor& v = enc_params_.value(i);
    b.enc.push_back(train_encoder ? g.param(v) : g.constant(v));
  }
  b.critic.reserve(critic_params_.count());
  for (int64_t i = 0; i < critic_params_.count(); ++i) {
    const Tensor& v = critic_params_.value(i);
    b.critic.push_back(train_critic ? g.param(v) : g.constant(v));
  }
  return b;
}

NodeId EncoderStack::encoder_graph(Graph& g, const Bound& b, NodeId x,
                                   bool with_head) const {
  DM_REQUIRE(g.value(x).cols() == cfg_.input_dim, InvalidArgument,
             "encoder input has " << g.value(x).cols() << " columns, expected "
                                  << cfg_.input_dim);
  NodeId z = x;
  for (size_t i = 0; i < encoder_layers_.size(); ++i) {
    const Layer& l = encoder_layers_[i];
    z = g.affine(z, b.enc[l.w], b.enc[l.b]);
    if (i + 1 < encoder_layers_.size()) z = g.leaky_relu(z, 0.0);
  }
  z = sphere_normalize(g, z, cfg_.radius);
  if (with_head && !head_layers_.empty()) {
    NodeId h = g.leaky_relu(
        g.affine(z, b.enc[head_layers_[0].w], b.enc[head_layers_[0].b]), 0.0);
    h = g.affine(h, b.enc[head_layers_[1].w], b.enc[head_layers_[1].b]);
    z = sphere_normalize(g, h, cfg_.radius);
  }
  return z;
}

NodeId EncoderStack::critic_graph(Graph& g, const Bound& b, NodeId z) const {
  DM_REQUIRE(g.value(z).cols() == cfg_.d_star, InvalidArgument,
             "critic input has " << g.value(z).cols() << " columns, expected "
                                 << cfg_.d_star);
  NodeId h = z;
  for (size_t i = 0; i < critic_layers_.size(); ++i) {
    const Layer& l = critic_layers_[i];
    h = g.affine(h, b.critic[l.w], b.critic[l.b]);
    if (l.ln_gain >= 0) {
      int64_t d = g.value(h).cols();
      int64_t n = g.value(h).rows();
      NodeId mean = g.scale(g.row_sum(h), 1.0 / static_cast<double>(d));
      NodeId cen = g.sub(h, g.bcast_col(mean, d));
      NodeId var = g.scale(g.row_sumsq(cen), 1.0 / static_cast<double>(d));
      NodeId sd = g.sqrt_op(g.add_scalar(var, cfg_.ln_eps));
      NodeId norm = g.div(cen, g.bcast_col(sd, d));
      h = g.add(g.mul(norm, g.bcast_row(b.critic[l.ln_gain], n)),
                g.bcast_row(b.critic[l.ln_bias], n));
      h = g.leaky_relu(h, cfg_.leaky_slope);
    }
  }
  return h;  // n x 1
}

Tensor EncoderStack::encode(const Tensor& x, bool with_head) const {
  Graph g;
  Bound b = bind(g, false, false);
  NodeId out = encoder_graph(g, b, g.constant(x), with_head);
  Tensor t = g.value(out);
  t.require_finite("encoder output");
  return t;
}

Tensor EncoderStack::criticize(const Tensor& z) const {
  Graph g;
  Bound b = bind(g, false, false);
  NodeId out = critic_graph(g, b, g.constant(z));
  Tensor t = g.value(out);
  t.require_finite("critic output");
  return t;
}

double lipschitz_probe(const EncoderStack& stack, const Tensor& points,
                       int64_t num_pairs, RngStream& rng) {
  DM_REQUIRE(points.rows() >= 2, InvalidArgument, "lipschitz probe needs >= 2 points");
  DM_REQUIRE(num_pairs >= 1, InvalidArgument, "lipschitz probe needs >= 1 pair");
  Tensor reps = stack.encode(points, false);
  int64_t n = points.rows();
  double best = 0.0;
  for (int64_t t = 0; t < num_pairs; ++t) {
    int64_t i = rng.uniform_int(n);
    int64_t j = rng.uniform_int(n);
    if (i == j) continue;
    double dx = 0.0, dz = 0.0;
    for (int64_t k = 0; k < points.cols(); ++k) {
      double v = points.at(i, k) - points.at(j, k);
      dx += v * v;
    }
    for (int64_t k = 0; k < reps.cols(); ++k) {
      double v = reps.at(i, k) - reps.at(j, k);
      dz += v * v;
    }
    if (dx <= 0.0) continue;
    best = std::max(best, std::sqrt(dz / dx));
  }
  return best;
}

}  // namespace dm::nn
