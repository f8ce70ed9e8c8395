#include "graphpde/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace gpde {

void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(beta2, double(state.step));
  for (auto& [name, p] : params) {
    Tensor& m = state.m.try_emplace(name, Tensor(p.shape)).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor(p.shape)).first->second;
    auto git = grads.find(name);
    const Tensor* g = git == grads.end() ? nullptr : &git->second;
    if (g && !g->same_shape(p))
      throw std::runtime_error("adam_step: gradient shape mismatch for " + name);
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double gi = g ? (*g)[i] : 0.0;
      m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
      v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

double clip_grad_norm(ParamMap& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (int64_t i = 0; i < g.numel(); ++i) sq += g[i] * g[i];
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& [name, g] : grads)
      for (int64_t i = 0; i < g.numel(); ++i) g[i] *= s;
  }
  return norm;
}

double lr_at(int64_t step, int64_t total_steps, int64_t warmup_steps,
             double lr_max) {
  if (step < 0) step = 0;
  if (warmup_steps > 0 && step < warmup_steps)
    return lr_max * double(step) / double(warmup_steps);
  if (step >= total_steps) return 0.0;
  const double progress =
      total_steps > warmup_steps
          ? double(step - warmup_steps) / double(total_steps - warmup_steps)
          : 1.0;
  return lr_max * 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace gpde
