#pragma once

#include <cstdint>
#include <vector>

#include "dm/graph.hpp"
#include "dm/rng.hpp"
#include "dm/tensor.hpp"

namespace dm::nn {

struct StackConfig {
  int64_t input_dim = 0;
  std::vector<int64_t> encoder_hidden;  // ReLU layers before the output layer
  int64_t d_star = 0;
  int64_t head_hidden = 0;              // 0 disables the projection head
  std::vector<int64_t> critic_hidden;   // hidden widths; each gets LN + leaky
  double radius = 1.0;
  double leaky_slope = 0.2;
  double ln_eps = 1e-5;

  void validate() const;
};

// Projects rows onto the radius-R sphere: x -> R * x / max(|x|, 1e-12).
// Zero rows stay at zero (degenerate initializations only).
NodeId sphere_normalize(Graph& g, NodeId x, double radius);

// Encoder (ReLU MLP, spherical output), optional two-layer projection head
// (also spherical), and critic (affine -> layer norm -> leaky relu per hidden
// layer, affine to a scalar). Encoder and head parameters live in one store
// (they train together); critic parameters in another.
class EncoderStack {
 public:
  EncoderStack(StackConfig cfg, uint64_t seed);  // He-uniform weights, zero biases

  // Rebuild from a checkpointed parameter store; names and shapes must match
  // the configuration exactly.
  static EncoderStack from_params(StackConfig cfg, const ParamStore& all);

  const StackConfig& config() const { return cfg_; }
  ParamStore& encoder_params() { return enc_params_; }
  const ParamStore& encoder_params() const { return enc_params_; }
  ParamStore& critic_params() { return critic_params_; }
  const ParamStore& critic_params() const { return critic_params_; }
  ParamStore merged_params() const;  // checkpoint layout: encoder, head, critic

  // Parameter bindings inside a graph; trainable roles become Param nodes,
  // frozen roles Const nodes.
  struct Bound {
    std::vector<NodeId> enc;     // aligned with encoder_params()
    std::vector<NodeId> critic;  // aligned with critic_params()
  };
  Bound bind(Graph& g, bool train_encoder, bool train_critic) const;

  NodeId encoder_graph(Graph& g, const Bound& b, NodeId x, bool with_head) const;
  NodeId critic_graph(Graph& g, const Bound& b, NodeId z) const;

  // Eager row-wise application (parameters bound as constants).
  Tensor encode(const Tensor& x, bool with_head) const;
  Tensor criticize(const Tensor& z) const;

 private:
  EncoderStack() = default;
  void allocate(RngStream* init_rng);

  StackConfig cfg_;
  ParamStore enc_params_;
  ParamStore critic_params_;
  struct Layer {
    int64_t w = -1, b = -1, ln_gain = -1, ln_bias = -1;
  };
  std::vector<Layer> encoder_layers_, head_layers_, critic_layers_;
};

// Max ratio |f(x)-f(y)| / |x-y| over randomly sampled point pairs
// (representation without head). Pairs with coincident points are skipped.
double lipschitz_probe(const EncoderStack& stack, const Tensor& points,
                       int64_t num_pairs, RngStream& rng);

}  // namespace dm::nn
