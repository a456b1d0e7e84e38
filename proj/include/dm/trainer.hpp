#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dm/adam.hpp"
#include "dm/augment.hpp"
#include "dm/data.hpp"
#include "dm/graph.hpp"
#include "dm/nn.hpp"
#include "dm/ot.hpp"
#include "dm/reference.hpp"
#include "dm/rng.hpp"

namespace dm::train {

// How the Wasserstein term is estimated: adversarial critic with gradient
// penalty (the production path) or a direct minibatch optimal-transport
// solve (oracle paths for cross-checking the critic).
enum class WMode { kDualGp, kPrimalExact, kPrimalSinkhorn };

WMode wmode_from_string(const std::string& s);
const char* wmode_name(WMode m);

struct TrainConfig {
  double lambda = 1.0;   // weight of the Wasserstein term
  double eta = 1.0;      // gradient-penalty weight
  double encoder_lr = 3e-5;
  double critic_lr = 1e-3;
  double encoder_weight_decay = 1e-4;
  double critic_weight_decay = 1e-4;
  int64_t batch_size = 512;
  int64_t epochs = 0;
  int64_t critic_period = 5;  // critic updates every this many steps
  int64_t warmup_steps = 500; // linear warm-up of the encoder learning rate
  WMode mode = WMode::kDualGp;
  bool w_on_head = true;      // Wasserstein term on head outputs (else raw encoder)
  ot::CostKind cost = ot::CostKind::kL2;
  double sinkhorn_reg = 1e-2;
  uint64_t seed = 0;

  void validate() const;
};

// Per-epoch means of the per-step loss pieces. wall_time_s is written as 0 so
// records (and the CSV derived from them) are byte-reproducible; timing lives
// in FitResult::elapsed_s.
struct MetricsRecord {
  int64_t epoch = 0;
  double align_loss = 0.0;
  double wasserstein_estimate = 0.0;
  double gp_term = 0.0;
  double total_loss = 0.0;
  double wall_time_s = 0.0;
};

// Mean over pairs of the squared representation gap |f(v1_i) - f(v2_i)|^2,
// encoded with the projection head (training-time representation).
NodeId alignment_loss(Graph& g, const nn::EncoderStack& stack,
                      const nn::EncoderStack::Bound& b, const Tensor& views1,
                      const Tensor& views2);

// Mean critic value on the reference batch minus mean critic value on the
// representation batch; the critic's ascent target and the encoder's descent
// signal. Reference rows enter as constants.
NodeId wasserstein_dual(Graph& g, const nn::EncoderStack& stack,
                        const nn::EncoderStack::Bound& b, NodeId reps,
                        const Tensor& refs);

// Mean over rows of (|grad_x critic(x)| - 1)^2 at per-row random interpolates
// x_i = u_i * reps_i + (1 - u_i) * refs_i, u_i ~ U[0,1]. Requires equal batch
// shapes. The gradient is taken on-tape, so the penalty can itself be
// differentiated with respect to critic parameters.
NodeId gradient_penalty(Graph& g, const nn::EncoderStack& stack,
                        const nn::EncoderStack::Bound& b, const Tensor& reps,
                        const Tensor& refs, RngStream& rng);

// Transport cost sum_ij plan_ij * dist(reps_i, refs_j) with the plan held
// fixed: evaluating at an optimal plan makes this the minibatch Wasserstein
// distance, and its gradient in reps is the envelope gradient.
NodeId plan_transport_cost(Graph& g, NodeId reps, const Tensor& refs,
                           const Tensor& plan, ot::CostKind kind);

struct LossParts {
  double align = 0.0;
  double wasserstein = 0.0;
  double gp = 0.0;
  double total = 0.0;  // align + lambda * wasserstein
};

// Encoder-side objective align + lambda * W on one batch, built on the tape
// rooted at the returned node. In dual mode W comes from the critic (critic
// role per the bound); in primal modes from an exact or entropic minibatch
// OT solve with envelope gradients. If gp_rng is non-null in dual mode the
// penalty term is evaluated into parts->gp (it is not part of the returned
// encoder objective).
NodeId total_loss(Graph& g, const nn::EncoderStack& stack,
                  const nn::EncoderStack::Bound& b, const Tensor& views1,
                  const Tensor& views2, const Tensor& refs, const TrainConfig& cfg,
                  RngStream* gp_rng, LossParts* parts);

// One critic ascent step (minimizes -W + eta * GP) on fixed representation
// and reference values. Returns the dual estimate and penalty values before
// the update.
std::pair<double, double> critic_step(nn::EncoderStack& stack, Adam& critic_adam,
                                      const Tensor& reps, const Tensor& refs,
                                      double eta, RngStream& gp_rng);

struct FitResult {
  std::vector<MetricsRecord> epochs;
  int64_t steps = 0;
  double elapsed_s = 0.0;  // real wall time; excluded from MetricsRecord
};

using EpochHook =
    std::function<void(const MetricsRecord&, const nn::EncoderStack&)>;

// Mini-max training loop. Per step: draw a view pair per instance and a
// reference batch matching the flattened representation count, update the
// critic every critic_period steps (dual mode), update the encoder every
// step. Deterministic per config seed. Raises DivergedError if the total
// loss stops being finite.
FitResult fit(nn::EncoderStack& stack, const data::LabeledDataset& source,
              const aug::AugmentationSet& views, const reference::ReferenceSpec& ref,
              const TrainConfig& cfg, const EpochHook& hook = {});

}  // namespace dm::train
