#pragma once

#include <cmath>
#include <vector>

#include "flowdet/nn/tensor.hpp"

namespace flowdet::nn {

/// Row-wise softmax with max-subtraction.
template <class S>
Tensor<S> softmax(const Tensor<S>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax: expected (N,K) logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor<S> p(logits.shape);
  for (std::size_t i = 0; i < n; ++i) {
    const S* in = logits.ptr() + i * k;
    S* out = p.ptr() + i * k;
    S mx = in[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, in[j]);
    S sum{0};
    for (std::size_t j = 0; j < k; ++j) {
      out[j] = std::exp(in[j] - mx);
      sum += out[j];
    }
    for (std::size_t j = 0; j < k; ++j) out[j] /= sum;
  }
  return p;
}

/// Binary labels use +1 = flow -> class 1, -1 = fall -> class 0.
inline std::size_t label_to_class(int label) { return label > 0 ? 1 : 0; }
inline int class_to_label(std::size_t cls) { return cls == 1 ? +1 : -1; }

template <class S>
struct LossResult {
  double loss = 0;      // mean over the batch
  Tensor<S> grad;       // d loss / d logits, already divided by batch size
};

/// Mean softmax cross-entropy over a (N,2) logit batch.
template <class S>
LossResult<S> softmax_xent(const Tensor<S>& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || logits.dim(1) != 2) {
    throw ShapeError("softmax_xent: expected (N,2) logits");
  }
  const std::size_t n = logits.dim(0);
  if (labels.size() != n) throw ShapeError("softmax_xent: label count mismatch");
  LossResult<S> res;
  res.grad = softmax(logits);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = label_to_class(labels[i]);
    const S* in = logits.ptr() + i * 2;
    const S mx = std::max(in[0], in[1]);
    const double logsum = mx + std::log(std::exp(in[0] - mx) + std::exp(in[1] - mx));
    total += logsum - in[cls];
    res.grad.data[i * 2 + cls] -= S{1};
  }
  const S inv_n = static_cast<S>(1.0 / static_cast<double>(n));
  for (auto& g : res.grad.data) g *= inv_n;
  res.loss = total / static_cast<double>(n);
  return res;
}

}  // namespace flowdet::nn
