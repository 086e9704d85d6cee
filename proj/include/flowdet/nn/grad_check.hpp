#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "flowdet/nn/loss.hpp"
#include "flowdet/nn/network.hpp"
#include "flowdet/rng.hpp"

namespace flowdet::nn {

struct GradCheckEntry {
  std::string param;
  double max_rel_err = 0;
  std::size_t coords = 0;
};

struct GradCheckResult {
  double max_rel_err = 0;
  std::vector<GradCheckEntry> per_param;
};

/// Central-difference check of every parameter tensor against the analytic
/// backward pass. Run with dropout disabled; batch statistics stay in play.
template <class S>
GradCheckResult grad_check(Network<S>& net, const Tensor<S>& inputs,
                           const std::vector<int>& labels, double eps_fd = 1e-5,
                           std::size_t coords_per_param = 200, std::uint64_t seed = 0) {
  static_assert(sizeof(S) == 8, "gradient checking requires 64-bit precision");
  net.set_dropout_enabled(false);
  auto buffers = net.buffers();
  std::vector<Tensor<S>> buffer_backup;
  for (auto* b : buffers) buffer_backup.push_back(*b);

  auto loss_at = [&]() -> double {
    Tensor<S> logits = net.forward(inputs, Mode::Train);
    auto res = softmax_xent(logits, labels);
    if (!std::isfinite(res.loss)) throw TrainingError("non-finite loss during gradient check");
    return res.loss;
  };

  // Analytic gradients.
  net.zero_grads();
  {
    Tensor<S> logits = net.forward(inputs, Mode::Train);
    auto res = softmax_xent(logits, labels);
    if (!std::isfinite(res.loss)) throw TrainingError("non-finite loss during gradient check");
    net.backward(res.grad);
  }
  auto params = net.params();
  std::vector<std::vector<S>> analytic;
  for (auto* p : params) analytic.push_back(p->grad.data);

  GradCheckResult out;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param<S>* p = params[pi];
    const std::size_t n = p->value.size();
    Rng rng(derive_seed(seed, 0x6663686bULL, pi));
    std::vector<std::size_t> coords;
    if (n <= coords_per_param) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      for (std::size_t i = 0; i < coords_per_param; ++i) {
        coords.push_back(static_cast<std::size_t>(rng.below(n)));
      }
    }
    GradCheckEntry entry{p->name, 0.0, coords.size()};
    for (std::size_t idx : coords) {
      const S saved = p->value.data[idx];
      p->value.data[idx] = saved + static_cast<S>(eps_fd);
      const double lp = loss_at();
      p->value.data[idx] = saved - static_cast<S>(eps_fd);
      const double lm = loss_at();
      p->value.data[idx] = saved;
      const double numeric = (lp - lm) / (2.0 * eps_fd);
      const double a = analytic[pi][idx];
      const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-6);
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    out.max_rel_err = std::max(out.max_rel_err, entry.max_rel_err);
    out.per_param.push_back(std::move(entry));
  }
  net.zero_grads();
  for (std::size_t i = 0; i < buffers.size(); ++i) *buffers[i] = buffer_backup[i];
  return out;
}

}  // namespace flowdet::nn
