#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metadg/tensor.hpp"

namespace metadg {

// Moment buffers are created lazily on the first step and then keep the
// shapes of the parameter set they were built for.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// In-place Adam update with decoupled weight decay: the decay shrinks the
// parameter before the moment-based step and never enters the moments.
// `names` (optional, parallel to params) improves diagnostics.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr, double weight_decay, const std::vector<std::string>& names = {});

// Plain SGD with the same decoupled decay convention.
void sgd_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr,
              double weight_decay, const std::vector<std::string>& names = {});

// Linear warmup from start_lr to target_lr over warmup_steps optimizer
// steps, constant at target_lr afterwards.
struct LrSchedule {
  double start_lr = 0.0;
  double target_lr = 0.0;
  std::int64_t warmup_steps = 0;
};

double lr_at(const LrSchedule& schedule, std::int64_t step);

}  // namespace metadg
