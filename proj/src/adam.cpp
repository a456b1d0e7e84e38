#include "dm/adam.hpp"

#include <cmath>

namespace dm {

LrSchedule LrSchedule::constant(double base) {
  LrSchedule s;
  s.kind = Kind::kConstant;
  s.base = base;
  return s;
}

LrSchedule LrSchedule::linear_warmup(double base, int64_t warmup_steps) {
  DM_REQUIRE(warmup_steps >= 0, InvalidArgument, "warmup_steps must be >= 0");
  LrSchedule s;
  s.kind = Kind::kLinearWarmup;
  s.base = base;
  s.warmup_steps = warmup_steps;
  return s;
}

LrSchedule LrSchedule::exp_decay(double start_lr, double end_lr, int64_t total_steps) {
  DM_REQUIRE(start_lr > 0 && end_lr > 0, InvalidArgument,
             "exp_decay requires positive rates");
  DM_REQUIRE(total_steps >= 1, InvalidArgument, "exp_decay requires total_steps >= 1");
  LrSchedule s;
  s.kind = Kind::kExpDecay;
  s.base = start_lr;
  s.end_lr = end_lr;
  s.total_steps = total_steps;
  return s;
}

double LrSchedule::at(int64_t step) const {
  switch (kind) {
    case Kind::kConstant:
      return base;
    case Kind::kLinearWarmup:
      if (warmup_steps > 0 && step < warmup_steps)
        return base * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
      return base;
    case Kind::kExpDecay: {
      if (total_steps <= 1) return end_lr;
      double t = static_cast<double>(std::min(step, total_steps - 1)) /
                 static_cast<double>(total_steps - 1);
      return base * std::pow(end_lr / base, t);
    }
  }
  return base;
}

void Adam::step(ParamStore& params, const std::vector<Tensor>& grads) {
  DM_REQUIRE(static_cast<int64_t>(grads.size()) == params.count(), InvalidArgument,
             "adam: got " << grads.size() << " gradients for " << params.count()
                          << " parameters");
  if (m_.empty()) {
    for (int64_t i = 0; i < params.count(); ++i) {
      const Tensor& p = params.value(i);
      m_.emplace_back(p.rows(), p.cols(), 0.0);
      v_.emplace_back(p.rows(), p.cols(), 0.0);
    }
  }
  double lr = cfg_.schedule.at(step_);
  last_lr_ = lr;
  ++step_;
  double t = static_cast<double>(step_);
  double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  for (int64_t i = 0; i < params.count(); ++i) {
    Tensor& p = params.value(i);
    const Tensor& g = grads[i];
    DM_REQUIRE(g.same_shape(p), InvalidArgument,
               "adam: gradient shape mismatch for '" << params.name(i) << "'");
    DM_REQUIRE(g.all_finite(), Numeric,
               "adam: non-finite gradient for parameter '" << params.name(i) << "'");
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (int64_t k = 0; k < p.size(); ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      double mhat = m[k] / bc1;
      double vhat = v[k] / bc2;
      p[k] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[k]);
    }
  }
}

}  // namespace dm
