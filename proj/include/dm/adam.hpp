#pragma once

#include <cstdint>
#include <vector>

#include "dm/tensor.hpp"

namespace dm {

// Step-indexed learning rate (step counts from 0).
struct LrSchedule {
  enum class Kind { kConstant, kLinearWarmup, kExpDecay };

  Kind kind = Kind::kConstant;
  double base = 1e-3;
  int64_t warmup_steps = 0;   // linear warmup: lr = base * (step+1) / warmup_steps
  double end_lr = 0.0;        // exponential decay target at step total_steps - 1
  int64_t total_steps = 1;

  static LrSchedule constant(double base);
  static LrSchedule linear_warmup(double base, int64_t warmup_steps);
  static LrSchedule exp_decay(double start_lr, double end_lr, int64_t total_steps);

  double at(int64_t step) const;
};

struct AdamConfig {
  LrSchedule schedule;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled: p -= lr * wd * p
};

// Adam with bias-corrected moments and decoupled weight decay. Moment buffers
// are keyed by parameter position, so the store layout must not change
// between steps.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  // Applies one update. grads[i] pairs with params.value(i); a non-finite
  // gradient entry raises Status::Numeric naming the parameter.
  void step(ParamStore& params, const std::vector<Tensor>& grads);

  int64_t steps_done() const { return step_; }
  double last_lr() const { return last_lr_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  int64_t step_ = 0;
  double last_lr_ = 0.0;
  std::vector<Tensor> m_, v_;
};

}  // namespace dm
