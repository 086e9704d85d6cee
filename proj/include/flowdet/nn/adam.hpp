#pragma once

#include <cmath>
#include <span>

#include "flowdet/nn/tensor.hpp"

namespace flowdet::nn {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update in place; zeroes gradients and bumps step_count.
template <class S>
void adam_step(std::span<Param<S>* const> params, const AdamConfig& cfg = {}) {
  for (Param<S>* p : params) {
    p->step_count += 1;
    const double t = static_cast<double>(p->step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad.data[i];
      const double m = cfg.beta1 * p->m.data[i] + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * p->v.data[i] + (1.0 - cfg.beta2) * g * g;
      p->m.data[i] = static_cast<S>(m);
      p->v.data[i] = static_cast<S>(v);
      p->value.data[i] -= static_cast<S>(cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps));
      p->grad.data[i] = S{0};
    }
  }
}

}  // namespace flowdet::nn
