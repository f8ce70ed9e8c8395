#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "graphpde/tensor.hpp"

namespace gpde {

using ParamMap = std::map<std::string, Tensor>;  // ordered: deterministic walks

struct AdamState {
  ParamMap m, v;
  int64_t step = 0;  // completed update count
};

// One Adam update. Parameters without a gradient entry are treated as having
// g = 0 (their moments still decay). No weight decay.
void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

// Global L2-norm clipping across all gradient tensors. Returns the pre-clip
// norm; gradients are rescaled in place only when the norm exceeds max_norm.
double clip_grad_norm(ParamMap& grads, double max_norm);

// Linear warmup from 0 to lr_max over warmup_steps, then a cosine ramp down
// to exactly 0 at total_steps.
double lr_at(int64_t step, int64_t total_steps, int64_t warmup_steps,
             double lr_max);

}  // namespace gpde
