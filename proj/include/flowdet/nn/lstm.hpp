#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <json.hpp>

#include "flowdet/nn/layers.hpp"
#include "flowdet/nn/tensor.hpp"

namespace flowdet::nn {

/// Single-layer LSTM over (N,T,D); emits the final hidden state (N,H).
/// Gate order in the packed weight matrices: input, forget, cell, output.
template <class S = double>
class Lstm final : public Layer<S> {
 public:
  Lstm(std::size_t input, std::size_t hidden, Rng& rng)
      : d_(input), h_(hidden),
        wx_("wx", {input, 4 * hidden}), wh_("wh", {hidden, 4 * hidden}), b_("b", {4 * hidden}) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (auto& v : wx_.value.data) v = static_cast<S>(rng.uniform(-bound, bound));
    for (auto& v : wh_.value.data) v = static_cast<S>(rng.uniform(-bound, bound));
    for (std::size_t j = h_; j < 2 * h_; ++j) b_.value.data[j] = S{1};  // forget gate
  }

  Tensor<S> forward(const Tensor<S>& x, Mode, Rng&) override {
    if (x.rank() != 3 || x.dim(2) != d_) {
      throw ShapeError(cat("lstm: expected (N,T,", d_, "), got ",
                           Tensor<S>::shape_str(x.shape)));
    }
    n_ = x.dim(0);
    t_ = x.dim(1);
    x_ = x;
    const std::size_t nh = n_ * h_;
    gates_.assign(t_, std::vector<S>(n_ * 4 * h_));
    c_.assign(t_ + 1, std::vector<S>(nh, S{0}));
    tanh_c_.assign(t_, std::vector<S>(nh));
    hstate_.assign(t_ + 1, std::vector<S>(nh, S{0}));

    std::vector<S> xt(n_ * d_);
    for (std::size_t t = 0; t < t_; ++t) {
      gather_step(x, t, xt);
      auto& z = gates_[t];
      blas::gemm_nn(xt.data(), wx_.value.ptr(), z.data(), n_, d_, 4 * h_);
      blas::gemm_nn(hstate_[t].data(), wh_.value.ptr(), z.data(), n_, h_, 4 * h_, true);
      for (std::size_t i = 0; i < n_; ++i) {
        S* zr = z.data() + i * 4 * h_;
        const S* cp = c_[t].data() + i * h_;
        S* cn = c_[t + 1].data() + i * h_;
        S* tc = tanh_c_[t].data() + i * h_;
        S* hn = hstate_[t + 1].data() + i * h_;
        for (std::size_t j = 0; j < h_; ++j) {
          S zi = zr[j] + b_.value.data[j];
          S zf = zr[h_ + j] + b_.value.data[h_ + j];
          S zg = zr[2 * h_ + j] + b_.value.data[2 * h_ + j];
          S zo = zr[3 * h_ + j] + b_.value.data[3 * h_ + j];
          S ig = sigmoid(zi), fg = sigmoid(zf), gg = std::tanh(zg), og = sigmoid(zo);
          zr[j] = ig;
          zr[h_ + j] = fg;
          zr[2 * h_ + j] = gg;
          zr[3 * h_ + j] = og;
          cn[j] = fg * cp[j] + ig * gg;
          tc[j] = std::tanh(cn[j]);
          hn[j] = og * tc[j];
        }
      }
    }
    Tensor<S> out({n_, h_});
    std::copy(hstate_[t_].begin(), hstate_[t_].end(), out.data.begin());
    this->has_cache_ = true;
    return out;
  }

  Tensor<S> backward(const Tensor<S>& dy) override {
    this->take_cache("lstm");
    require_shape(dy, {n_, h_}, "lstm backward");
    const std::size_t nh = n_ * h_;
    std::vector<S> dh(dy.data.begin(), dy.data.end());
    std::vector<S> dc(nh, S{0});
    std::vector<S> dz(n_ * 4 * h_);
    std::vector<S> xt(n_ * d_), dxt(n_ * d_);
    Tensor<S> dx(x_.shape);

    for (std::size_t t = t_; t-- > 0;) {
      const auto& z = gates_[t];
      for (std::size_t i = 0; i < n_; ++i) {
        const S* zr = z.data() + i * 4 * h_;
        const S* cp = c_[t].data() + i * h_;
        const S* tc = tanh_c_[t].data() + i * h_;
        S* dzr = dz.data() + i * 4 * h_;
        S* dhp = dh.data() + i * h_;
        S* dcp = dc.data() + i * h_;
        for (std::size_t j = 0; j < h_; ++j) {
          const S ig = zr[j], fg = zr[h_ + j], gg = zr[2 * h_ + j], og = zr[3 * h_ + j];
          const S dout = dhp[j] * tc[j];
          const S dct = dcp[j] + dhp[j] * og * (S{1} - tc[j] * tc[j]);
          const S di = dct * gg;
          const S df = dct * cp[j];
          const S dg = dct * ig;
          dzr[j] = di * ig * (S{1} - ig);
          dzr[h_ + j] = df * fg * (S{1} - fg);
          dzr[2 * h_ + j] = dg * (S{1} - gg * gg);
          dzr[3 * h_ + j] = dout * og * (S{1} - og);
          dcp[j] = dct * fg;  // becomes dc_{t-1}
        }
      }
      gather_step(x_, t, xt);
      blas::gemm_tn(xt.data(), dz.data(), wx_.grad.ptr(), n_, d_, 4 * h_, true);
      blas::gemm_tn(hstate_[t].data(), dz.data(), wh_.grad.ptr(), n_, h_, 4 * h_, true);
      for (std::size_t i = 0; i < n_; ++i) {
        const S* dzr = dz.data() + i * 4 * h_;
        for (std::size_t j = 0; j < 4 * h_; ++j) b_.grad.data[j] += dzr[j];
      }
      blas::gemm_nt(dz.data(), wx_.value.ptr(), dxt.data(), n_, 4 * h_, d_);
      scatter_step(dx, t, dxt);
      blas::gemm_nt(dz.data(), wh_.value.ptr(), dh.data(), n_, 4 * h_, h_);
    }
    return dx;
  }

  std::vector<Param<S>*> params() override { return {&wx_, &wh_, &b_}; }
  nlohmann::json spec() const override {
    return {{"kind", "lstm"}, {"input", d_}, {"hidden", h_}};
  }
  const char* kind() const override { return "lstm"; }

 private:
  static S sigmoid(S v) { return S{1} / (S{1} + std::exp(-v)); }

  void gather_step(const Tensor<S>& x, std::size_t t, std::vector<S>& xt) const {
    for (std::size_t i = 0; i < n_; ++i) {
      const S* src = x.ptr() + (i * t_ + t) * d_;
      std::copy(src, src + d_, xt.data() + i * d_);
    }
  }

  void scatter_step(Tensor<S>& dx, std::size_t t, const std::vector<S>& dxt) const {
    for (std::size_t i = 0; i < n_; ++i) {
      S* dst = dx.ptr() + (i * t_ + t) * d_;
      std::copy(dxt.data() + i * d_, dxt.data() + (i + 1) * d_, dst);
    }
  }

  std::size_t d_, h_;
  Param<S> wx_, wh_, b_;
  Tensor<S> x_;
  std::vector<std::vector<S>> gates_, c_, tanh_c_, hstate_;
  std::size_t n_ = 0, t_ = 0;
};

}  // namespace flowdet::nn
