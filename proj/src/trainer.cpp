#include "dm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace dm::train {

WMode wmode_from_string(const std::string& s) {
  if (s == "dual_gp") return WMode::kDualGp;
  if (s == "primal_exact") return WMode::kPrimalExact;
  if (s == "primal_sinkhorn") return WMode::kPrimalSinkhorn;
  fail(Status::InvalidArgument, "unknown wasserstein mode '" + s + "'");
}

const char* wmode_name(WMode m) {
  switch (m) {
    case WMode::kDualGp: return "dual_gp";
    case WMode::kPrimalExact: return "primal_exact";
    case WMode::kPrimalSinkhorn: return "primal_sinkhorn";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  DM_REQUIRE(lambda >= 0.0, Validation, "train.lambda must be >= 0");
  DM_REQUIRE(eta >= 0.0, Validation, "train.eta must be >= 0");
  DM_REQUIRE(encoder_lr > 0.0, Validation, "train.encoder_lr must be positive");
  DM_REQUIRE(critic_lr > 0.0, Validation, "train.critic_lr must be positive");
  DM_REQUIRE(encoder_weight_decay >= 0.0, Validation,
             "train.encoder_weight_decay must be >= 0");
  DM_REQUIRE(critic_weight_decay >= 0.0, Validation,
             "train.critic_weight_decay must be >= 0");
  DM_REQUIRE(batch_size >= 2, Validation, "train.batch_size must be >= 2");
  DM_REQUIRE(epochs >= 0, Validation, "train.epochs must be >= 0");
  DM_REQUIRE(critic_period >= 1, Validation, "train.critic_period must be >= 1");
  DM_REQUIRE(warmup_steps >= 0, Validation, "train.warmup_steps must be >= 0");
  DM_REQUIRE(sinkhorn_reg > 0.0, Validation, "train.sinkhorn_reg must be positive");
}

NodeId alignment_loss(Graph& g, const nn::EncoderStack& stack,
                      const nn::EncoderStack::Bound& b, const Tensor& views1,
                      const Tensor& views2) {
  DM_REQUIRE(views1.rows() >= 1, InvalidArgument, "alignment loss on an empty batch");
  DM_REQUIRE(views1.rows() == views2.rows() && views1.cols() == views2.cols(),
             InvalidArgument,
             "view batches disagree: " << views1.rows() << "x" << views1.cols()
                                       << " vs " << views2.rows() << "x"
                                       << views2.cols());
  NodeId z1 = stack.encoder_graph(g, b, g.constant(views1), true);
  NodeId z2 = stack.encoder_graph(g, b, g.constant(views2), true);
  return g.mean_all(g.row_sumsq(g.sub(z1, z2)));
}

NodeId wasserstein_dual(Graph& g, const nn::EncoderStack& stack,
                        const nn::EncoderStack::Bound& b, NodeId reps,
                        const Tensor& refs) {
  NodeId on_refs = g.mean_all(stack.critic_graph(g, b, g.constant(refs)));
  NodeId on_reps = g.mean_all(stack.critic_graph(g, b, reps));
  return g.sub(on_refs, on_reps);
}

NodeId gradient_penalty(Graph& g, const nn::EncoderStack& stack,
                        const nn::EncoderStack::Bound& b, const Tensor& reps,
                        const Tensor& refs, RngStream& rng) {
  DM_REQUIRE(reps.rows() == refs.rows() && reps.cols() == refs.cols(),
             InvalidArgument,
             "penalty batches disagree: " << reps.rows() << "x" << reps.cols()
                                          << " vs " << refs.rows() << "x"
                                          << refs.cols());
  int64_t n = reps.rows(), d = reps.cols();
  Tensor xbar(n, d);
  for (int64_t i = 0; i < n; ++i) {
    double u = rng.uniform();
    for (int64_t k = 0; k < d; ++k)
      xbar.at(i, k) = u * reps.at(i, k) + (1.0 - u) * refs.at(i, k);
  }
  NodeId x = g.input(xbar);
  NodeId total = g.sum_all(stack.critic_graph(g, b, x));
  NodeId grad = g.backward(total, {x})[0];  // row i holds grad critic(x_i)
  NodeId norms = g.sqrt_op(g.max_scalar(g.row_sumsq(grad), 1e-24));
  NodeId dev = g.add_scalar(norms, -1.0);
  return g.mean_all(g.mul(dev, dev));
}

NodeId plan_transport_cost(Graph& g, NodeId reps, const Tensor& refs,
                           const Tensor& plan, ot::CostKind kind) {
  int64_t n = g.value(reps).rows(), m = refs.rows();
  DM_REQUIRE(plan.rows() == n && plan.cols() == m, InvalidArgument,
             "plan shape " << plan.rows() << "x" << plan.cols()
                           << " does not match batches " << n << "x" << m);
  DM_REQUIRE(g.value(reps).cols() == refs.cols(), InvalidArgument,
             "representation and reference dims disagree");
  if (kind == ot::CostKind::kL2) {
    NodeId dots = g.matmul(reps, g.constant(refs), false, true);  // n x m
    NodeId zn = g.bcast_col(g.row_sumsq(reps), m);
    Tensor ref_sumsq(1, m);
    for (int64_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (int64_t k = 0; k < refs.cols(); ++k) acc += refs.at(j, k) * refs.at(j, k);
      ref_sumsq.at(0, j) = acc;
    }
    NodeId rn = g.bcast_row(g.constant(ref_sumsq), n);
    NodeId sq = g.add(g.sub(zn, g.scale(dots, 2.0)), rn);
    NodeId dist = g.sqrt_op(g.max_scalar(sq, 1e-24));
    return g.sum_all(g.mul(g.constant(plan), dist));
  }
  // L1 ground cost: one graph segment per reference atom.
  NodeId acc = -1;
  for (int64_t j = 0; j < m; ++j) {
    Tensor ref_row(1, refs.cols());
    Tensor col(n, 1);
    for (int64_t k = 0; k < refs.cols(); ++k) ref_row.at(0, k) = refs.at(j, k);
    for (int64_t i = 0; i < n; ++i) col.at(i, 0) = plan.at(i, j);
    NodeId diff = g.sub(reps, g.bcast_row(g.constant(ref_row), n));
    NodeId dist = g.row_sum(g.leaky_relu(diff, -1.0));  // slope -1 gives |x|
    NodeId term = g.sum_all(g.mul(g.constant(col), dist));
    acc = acc < 0 ? term : g.add(acc, term);
  }
  return acc;
}

namespace {

// Stacked training-time representations of both views, as a graph node (for
// encoder gradients) computed from already-built per-view nodes.
NodeId stacked_reps(Graph& g, const nn::EncoderStack& stack,
                    const nn::EncoderStack::Bound& b, const Tensor& views1,
                    const Tensor& views2, bool with_head) {
  NodeId z1 = stack.encoder_graph(g, b, g.constant(views1), with_head);
  NodeId z2 = stack.encoder_graph(g, b, g.constant(views2), with_head);
  return g.concat_rows(z1, z2);
}

Tensor eager_reps(const nn::EncoderStack& stack, const Tensor& views1,
                  const Tensor& views2, bool with_head) {
  Tensor z1 = stack.encode(views1, with_head);
  Tensor z2 = stack.encode(views2, with_head);
  Tensor out(z1.rows() + z2.rows(), z1.cols());
  for (int64_t i = 0; i < z1.size(); ++i) out[i] = z1[i];
  for (int64_t i = 0; i < z2.size(); ++i) out[z1.size() + i] = z2[i];
  return out;
}

ot::Coupling minibatch_coupling(const Tensor& reps, const Tensor& refs,
                                const TrainConfig& cfg) {
  auto mu = ot::DiscreteMeasure::uniform(reps);
  auto nu = ot::DiscreteMeasure::uniform(refs);
  if (cfg.mode == WMode::kPrimalExact) return ot::mallows_exact(mu, nu, cfg.cost);
  ot::SinkhornOptions opts;
  opts.reg = cfg.sinkhorn_reg;
  return ot::sinkhorn(mu, nu, cfg.cost, opts);
}

}  // namespace

NodeId total_loss(Graph& g, const nn::EncoderStack& stack,
                  const nn::EncoderStack::Bound& b, const Tensor& views1,
                  const Tensor& views2, const Tensor& refs, const TrainConfig& cfg,
                  RngStream* gp_rng, LossParts* parts) {
  NodeId align = alignment_loss(g, stack, b, views1, views2);
  NodeId w = -1;
  if (cfg.mode == WMode::kDualGp) {
    NodeId reps = stacked_reps(g, stack, b, views1, views2, cfg.w_on_head);
    w = wasserstein_dual(g, stack, b, reps, refs);
    if (gp_rng != nullptr && parts != nullptr) {
      Tensor rep_vals = g.value(reps);
      NodeId gp = gradient_penalty(g, stack, b, rep_vals, refs, *gp_rng);
      parts->gp = g.value(gp)[0];
    }
  } else {
    Tensor rep_vals = eager_reps(stack, views1, views2, cfg.w_on_head);
    ot::Coupling coupling = minibatch_coupling(rep_vals, refs, cfg);
    NodeId reps = stacked_reps(g, stack, b, views1, views2, cfg.w_on_head);
    w = plan_transport_cost(g, reps, refs, coupling.plan, cfg.cost);
  }
  NodeId total = g.add(align, g.scale(w, cfg.lambda));
  if (parts != nullptr) {
    parts->align = g.value(align)[0];
    parts->wasserstein = g.value(w)[0];
    parts->total = g.value(total)[0];
  }
  return total;
}

std::pair<double, double> critic_step(nn::EncoderStack& stack, Adam& critic_adam,
                                      const Tensor& reps, const Tensor& refs,
                                      double eta, RngStream& gp_rng) {
  Graph g;
  nn::EncoderStack::Bound b = stack.bind(g, false, true);
  NodeId w = wasserstein_dual(g, stack, b, g.constant(reps), refs);
  NodeId gp = gradient_penalty(g, stack, b, reps, refs, gp_rng);
  NodeId objective = g.add(g.neg(w), g.scale(gp, eta));
  double w_val = g.value(w)[0];
  double gp_val = g.value(gp)[0];
  DM_REQUIRE(std::isfinite(g.value(objective)[0]), Numeric,
             "critic objective is not finite");
  std::vector<NodeId> grads = g.backward(objective, b.critic);
  std::vector<Tensor> grad_vals;
  grad_vals.reserve(grads.size());
  for (NodeId id : grads) grad_vals.push_back(g.value(id));
  critic_adam.step(stack.critic_params(), grad_vals);
  return {w_val, gp_val};
}

FitResult fit(nn::EncoderStack& stack, const data::LabeledDataset& source,
              const aug::AugmentationSet& views, const reference::ReferenceSpec& ref,
              const TrainConfig& cfg, const EpochHook& hook) {
  cfg.validate();
  source.validate();
  DM_REQUIRE(source.dim() == stack.config().input_dim, InvalidArgument,
             "dataset dim " << source.dim() << " != encoder input "
                            << stack.config().input_dim);
  DM_REQUIRE(views.dim() == source.dim(), InvalidArgument,
             "augmentation dim " << views.dim() << " != dataset dim " << source.dim());
  DM_REQUIRE(ref.d_star == stack.config().d_star, InvalidArgument,
             "reference dim " << ref.d_star << " != representation dim "
                              << stack.config().d_star);
  DM_REQUIRE(source.size() >= cfg.batch_size, InvalidArgument,
             "dataset has " << source.size() << " points, batch size is "
                            << cfg.batch_size);

  auto t0 = std::chrono::steady_clock::now();
  int64_t n = source.size(), bsz = cfg.batch_size, d = source.dim();
  int64_t steps_per_epoch = n / bsz;

  AdamConfig enc_cfg;
  enc_cfg.schedule = cfg.warmup_steps > 0
                         ? LrSchedule::linear_warmup(cfg.encoder_lr, cfg.warmup_steps)
                         : LrSchedule::constant(cfg.encoder_lr);
  enc_cfg.weight_decay = cfg.encoder_weight_decay;
  Adam enc_adam(enc_cfg);

  AdamConfig critic_cfg;
  critic_cfg.schedule = LrSchedule::constant(cfg.critic_lr);
  critic_cfg.weight_decay = cfg.critic_weight_decay;
  Adam critic_adam(critic_cfg);

  FitResult result;
  int64_t global_step = 0;
  Tensor batch(bsz, d);
  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngStream shuffle_rng(cfg.seed, "fit/epoch/" + std::to_string(epoch) + "/shuffle");
    std::vector<int64_t> perm = shuffle_rng.permutation(n);
    double sum_align = 0.0, sum_w = 0.0, sum_total = 0.0, sum_gp = 0.0;
    int64_t gp_steps = 0;
    for (int64_t s = 0; s < steps_per_epoch; ++s, ++global_step) {
      for (int64_t i = 0; i < bsz; ++i) {
        const double* src = source.points.data() + perm[s * bsz + i] * d;
        std::copy(src, src + d, batch.data() + i * d);
      }
      std::string tag = std::to_string(global_step);
      RngStream view_rng(cfg.seed, "fit/step/" + tag + "/views");
      auto [v1, v2] = views.sample_views(batch, view_rng);
      RngStream ref_rng(cfg.seed, "fit/step/" + tag + "/reference");
      Tensor refs = reference::sample_reference(ref, 2 * bsz, ref_rng).points;

      if (cfg.mode == WMode::kDualGp && global_step % cfg.critic_period == 0) {
        Tensor rep_vals = eager_reps(stack, v1, v2, cfg.w_on_head);
        RngStream gp_rng(cfg.seed, "fit/step/" + tag + "/gp");
        auto [w_val, gp_val] = critic_step(stack, critic_adam, rep_vals, refs,
                                           cfg.eta, gp_rng);
        (void)w_val;
        sum_gp += gp_val;
        ++gp_steps;
      }

      Graph g;
      nn::EncoderStack::Bound b = stack.bind(g, true, false);
      LossParts parts;
      NodeId total = total_loss(g, stack, b, v1, v2, refs, cfg, nullptr, &parts);
      if (!std::isfinite(parts.total))
        throw DivergedError(global_step, "total loss is not finite at step " +
                                             std::to_string(global_step));
      std::vector<NodeId> grads = g.backward(total, b.enc);
      std::vector<Tensor> grad_vals;
      grad_vals.reserve(grads.size());
      for (NodeId id : grads) grad_vals.push_back(g.value(id));
      enc_adam.step(stack.encoder_params(), grad_vals);

      sum_align += parts.align;
      sum_w += parts.wasserstein;
      sum_total += parts.total;
    }
    MetricsRecord rec;
    rec.epoch = epoch;
    double denom = static_cast<double>(std::max<int64_t>(1, steps_per_epoch));
    rec.align_loss = sum_align / denom;
    rec.wasserstein_estimate = sum_w / denom;
    rec.gp_term = gp_steps > 0 ? sum_gp / static_cast<double>(gp_steps) : 0.0;
    rec.total_loss = sum_total / denom;
    result.epochs.push_back(rec);
    if (hook) hook(rec, stack);
  }
  result.steps = global_step;
  result.elapsed_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace dm::train
