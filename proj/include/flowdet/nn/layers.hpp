#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowdet/nn/tensor.hpp"
#include "flowdet/rng.hpp"

namespace flowdet::nn {

enum class Mode { Train, Eval };

template <class S = double>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual Tensor<S> forward(const Tensor<S>& x, Mode mode, Rng& rng) = 0;
  /// Uses the cache from the matching forward call (single use).
  virtual Tensor<S> backward(const Tensor<S>& dy) = 0;

  virtual std::vector<Param<S>*> params() { return {}; }
  virtual std::vector<Tensor<S>*> buffers() { return {}; }
  virtual nlohmann::json spec() const = 0;
  virtual const char* kind() const = 0;

 protected:
  bool has_cache_ = false;

  void take_cache(const char* who) {
    if (!has_cache_) {
      throw TrainingError(cat(who, ": backward without a matching forward (stale cache)"));
    }
    has_cache_ = false;
  }
};

template <class S>
void kaiming_uniform(Tensor<S>& t, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.data) v = static_cast<S>(rng.uniform(-bound, bound));
}

// ---------------------------------------------------------------------------

/// Fixed per-sample reshape, e.g. (N,10,12) -> (N,1,10,12).
template <class S = double>
class Reshape final : public Layer<S> {
 public:
  explicit Reshape(std::vector<std::size_t> per_sample) : per_sample_(std::move(per_sample)) {}

  Tensor<S> forward(const Tensor<S>& x, Mode, Rng&) override {
    in_shape_ = x.shape;
    std::vector<std::size_t> sh{x.dim(0)};
    sh.insert(sh.end(), per_sample_.begin(), per_sample_.end());
    this->has_cache_ = true;
    return x.reshaped(std::move(sh));
  }

  Tensor<S> backward(const Tensor<S>& dy) override {
    this->take_cache("reshape");
    return dy.reshaped(in_shape_);
  }

  nlohmann::json spec() const override { return {{"kind", "reshape"}, {"shape", per_sample_}}; }
  const char* kind() const override { return "reshape"; }

 private:
  std::vector<std::size_t> per_sample_;
  std::vector<std::size_t> in_shape_;
};

template <class S = double>
class Flatten final : public Layer<S> {
 public:
  Tensor<S> forward(const Tensor<S>& x, Mode, Rng&) override {
    in_shape_ = x.shape;
    this->has_cache_ = true;
    return x.reshaped({x.dim(0), x.size() / x.dim(0)});
  }

  Tensor<S> backward(const Tensor<S>& dy) override {
    this->take_cache("flatten");
    return dy.reshaped(in_shape_);
  }

  nlohmann::json spec() const override { return {{"kind", "flatten"}}; }
  const char* kind() const override { return "flatten"; }

 private:
  std::vector<std::size_t> in_shape_;
};

template <class S = double>
class ReLU final : public Layer<S> {
 public:
  Tensor<S> forward(const Tensor<S>& x, Mode, Rng&) override {
    Tensor<S> y = x;
    mask_.assign(x.size(), 0);
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y.data[i] > S{0}) {
        mask_[i] = 1;
      } else {
        y.data[i] = S{0};
      }
    }
    this->has_cache_ = true;
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) override {
    this->take_cache("relu");
    if (dy.size() != mask_.size()) throw ShapeError("relu: upstream gradient shape mismatch");
    Tensor<S> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (!mask_[i]) dx.data[i] = S{0};
    }
    return dx;
  }

  nlohmann::json spec() const override { return {{"kind", "relu"}}; }
  const char* kind() const override { return "relu"; }

 private:
  std::vector<std::uint8_t> mask_;
};

/// Inverted dropout: Train scales kept units by 1/(1-rate); Eval is identity.
template <class S = double>
class Dropout final : public Layer<S> {
 public:
  explicit Dropout(double rate) : rate_(rate) {
    if (rate_ < 0.0 || rate_ >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
  }

  Tensor<S> forward(const Tensor<S>& x, Mode mode, Rng& rng) override {
    this->has_cache_ = true;
    if (mode == Mode::Eval || !enabled || rate_ == 0.0) {
      mask_.clear();
      return x;
    }
    const double keep = 1.0 - rate_;
    const S inv = static_cast<S>(1.0 / keep);
    Tensor<S> y = x;
    mask_.assign(x.size(), S{0});
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (rng.uniform() < keep) {
        mask_[i] = inv;
        y.data[i] *= inv;
      } else {
        y.data[i] = S{0};
      }
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) override {
    this->take_cache("dropout");
    if (mask_.empty()) return dy;
    Tensor<S> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= mask_[i];
    return dx;
  }

  nlohmann::json spec() const override { return {{"kind", "dropout"}, {"rate", rate_}}; }
  const char* kind() const override { return "dropout"; }

  double rate() const { return rate_; }
  bool enabled = true;

 private:
  double rate_;
  std::vector<S> mask_;
};

template <class S = double>
class Dense final : public Layer<S> {
 public:
  Dense(std::size_t in, std::size_t out, Rng& rng)
      : in_(in), out_(out), w_("w", {in, out}), b_("b", {out}) {
    kaiming_uniform(w_.value, in, rng);
  }

  Tensor<S> forward(const Tensor<S>& x, Mode, Rng&) override {
    if (x.rank() != 2 || x.dim(1) != in_) {
      throw ShapeError(cat("dense: expected (N,", in_, "), got ", Tensor<S>::shape_str(x.shape)));
    }
    const std::size_t n = x.dim(0);
    x_ = x;
    Tensor<S> y({n, out_});
    blas::gemm_nn(x.ptr(), w_.value.ptr(), y.ptr(), n, in_, out_);
    for (std::size_t i = 0; i < n; ++i) {
      S* row = y.ptr() + i * out_;
      for (std::size_t j = 0; j < out_; ++j) row[j] += b_.value.data[j];
    }
    this->has_cache_ = true;
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) override {
    this->take_cache("dense");
    const std::size_t n = x_.dim(0);
    require_shape(dy, {n, out_}, "dense backward");
    blas::gemm_tn(x_.ptr(), dy.ptr(), w_.grad.ptr(), n, in_, out_, /*accumulate=*/true);
    for (std::size_t i = 0; i < n; ++i) {
      const S* row = dy.ptr() + i * out_;
      for (std::size_t j = 0; j < out_; ++j) b_.grad.data[j] += row[j];
    }
    Tensor<S> dx({n, in_});
    blas::gemm_nt(dy.ptr(), w_.value.ptr(), dx.ptr(), n, out_, in_);
    return dx;
  }

  std::vector<Param<S>*> params() override { return {&w_, &b_}; }
  nlohmann::json spec() const override {
    return {{"kind", "dense"}, {"in", in_}, {"out", out_}};
  }
  const char* kind() const override { return "dense"; }

  Param<S>& weight() { return w_; }
  Param<S>& bias() { return b_; }

 private:
  std::size_t in_, out_;
  Param<S> w_, b_;
  Tensor<S> x_;
};

/// Valid-mode 2D convolution, stride 1, NCHW. Implemented as im2col + GEMM.
template <class S = double>
class Conv2d final : public Layer<S> {
 public:
  Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kh, std::size_t kw, Rng& rng)
      : in_ch_(in_ch), out_ch_(out_ch), kh_(kh), kw_(kw),
        w_("w", {in_ch * kh * kw, out_ch}), b_("b", {out_ch}) {
    kaiming_uniform(w_.value, in_ch * kh * kw, rng);
  }

  Tensor<S> forward(const Tensor<S>& x, Mode, Rng&) override {
    if (x.rank() != 4 || x.dim(1) != in_ch_ || x.dim(2) < kh_ || x.dim(3) < kw_) {
      throw ShapeError(cat("conv2d: expected (N,", in_ch_, ",>=", kh_, ",>=", kw_, "), got ",
                           Tensor<S>::shape_str(x.shape)));
    }
    n_ = x.dim(0);
    h_ = x.dim(2);
    w_in_ = x.dim(3);
    oh_ = h_ - kh_ + 1;
    ow_ = w_in_ - kw_ + 1;
    const std::size_t ckk = in_ch_ * kh_ * kw_;
    const std::size_t rows = n_ * oh_ * ow_;

    col_ = Tensor<S>({rows, ckk});
    im2col(x);
    Tensor<S> ymat({rows, out_ch_});
    blas::gemm_nn(col_.ptr(), w_.value.ptr(), ymat.ptr(), rows, ckk, out_ch_);
    Tensor<S> y({n_, out_ch_, oh_, ow_});
    // (n,oh,ow,oc) -> (n,oc,oh,ow), adding bias
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t p = 0; p < oh_ * ow_; ++p) {
        const S* src = ymat.ptr() + (i * oh_ * ow_ + p) * out_ch_;
        for (std::size_t oc = 0; oc < out_ch_; ++oc) {
          y.data[((i * out_ch_ + oc) * oh_ * ow_) + p] = src[oc] + b_.value.data[oc];
        }
      }
    }
    this->has_cache_ = true;
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) override {
    this->take_cache("conv2d");
    require_shape(dy, {n_, out_ch_, oh_, ow_}, "conv2d backward");
    const std::size_t ckk = in_ch_ * kh_ * kw_;
    const std::size_t rows = n_ * oh_ * ow_;

    Tensor<S> dymat({rows, out_ch_});
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t oc = 0; oc < out_ch_; ++oc) {
        const S* src = dy.ptr() + (i * out_ch_ + oc) * oh_ * ow_;
        for (std::size_t p = 0; p < oh_ * ow_; ++p) {
          dymat.data[(i * oh_ * ow_ + p) * out_ch_ + oc] = src[p];
        }
      }
    }
    blas::gemm_tn(col_.ptr(), dymat.ptr(), w_.grad.ptr(), rows, ckk, out_ch_, /*accumulate=*/true);
    for (std::size_t r = 0; r < rows; ++r) {
      const S* row = dymat.ptr() + r * out_ch_;
      for (std::size_t oc = 0; oc < out_ch_; ++oc) b_.grad.data[oc] += row[oc];
    }
    Tensor<S> dcol({rows, ckk});
    blas::gemm_nt(dymat.ptr(), w_.value.ptr(), dcol.ptr(), rows, out_ch_, ckk);
    return col2im(dcol);
  }

  std::vector<Param<S>*> params() override { return {&w_, &b_}; }
  nlohmann::json spec() const override {
    return {{"kind", "conv2d"}, {"in_ch", in_ch_}, {"out_ch", out_ch_},
            {"kh", kh_}, {"kw", kw_}};
  }
  const char* kind() const override { return "conv2d"; }

  Param<S>& weight() { return w_; }
  Param<S>& bias() { return b_; }

 private:
  void im2col(const Tensor<S>& x) {
    const std::size_t ckk = in_ch_ * kh_ * kw_;
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t oy = 0; oy < oh_; ++oy) {
        for (std::size_t ox = 0; ox < ow_; ++ox) {
          S* dst = col_.ptr() + ((i * oh_ + oy) * ow_ + ox) * ckk;
          for (std::size_t c = 0; c < in_ch_; ++c) {
            const S* src = x.ptr() + ((i * in_ch_ + c) * h_ + oy) * w_in_ + ox;
            for (std::size_t ky = 0; ky < kh_; ++ky) {
              for (std::size_t kx = 0; kx < kw_; ++kx) {
                *dst++ = src[ky * w_in_ + kx];
              }
            }
          }
        }
      }
    }
  }

  Tensor<S> col2im(const Tensor<S>& dcol) const {
    Tensor<S> dx({n_, in_ch_, h_, w_in_});
    const std::size_t ckk = in_ch_ * kh_ * kw_;
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t oy = 0; oy < oh_; ++oy) {
        for (std::size_t ox = 0; ox < ow_; ++ox) {
          const S* src = dcol.ptr() + ((i * oh_ + oy) * ow_ + ox) * ckk;
          for (std::size_t c = 0; c < in_ch_; ++c) {
            S* dst = dx.ptr() + ((i * in_ch_ + c) * h_ + oy) * w_in_ + ox;
            for (std::size_t ky = 0; ky < kh_; ++ky) {
              for (std::size_t kx = 0; kx < kw_; ++kx) {
                dst[ky * w_in_ + kx] += *src++;
              }
            }
          }
        }
      }
    }
    return dx;
  }

  std::size_t in_ch_, out_ch_, kh_, kw_;
  Param<S> w_, b_;
  Tensor<S> col_;
  std::size_t n_ = 0, h_ = 0, w_in_ = 0, oh_ = 0, ow_ = 0;
};

/// Per-channel batch normalization over (N,H,W), NCHW input.
template <class S = double>
class BatchNorm final : public Layer<S> {
 public:
  explicit BatchNorm(std::size_t channels, double eps = 1e-5, double momentum = 0.1)
      : c_(channels), eps_(eps), momentum_(momentum),
        gamma_("gamma", {channels}), beta_("beta", {channels}),
        run_mean_({channels}), run_var_({channels}) {
    gamma_.value.fill(S{1});
    run_var_.fill(S{1});
  }

  Tensor<S> forward(const Tensor<S>& x, Mode mode, Rng&) override {
    if (x.rank() != 4 || x.dim(1) != c_) {
      throw ShapeError(cat("batchnorm: expected (N,", c_, ",H,W), got ",
                           Tensor<S>::shape_str(x.shape)));
    }
    n_ = x.dim(0);
    hw_ = x.dim(2) * x.dim(3);
    const std::size_t m = n_ * hw_;
    train_mode_ = (mode == Mode::Train);
    Tensor<S> y(x.shape);
    inv_std_.assign(c_, S{0});

    if (train_mode_) {
      xhat_ = Tensor<S>(x.shape);
      for (std::size_t c = 0; c < c_; ++c) {
        double mean = 0;
        for_channel(x, c, [&](S v, std::size_t) { mean += v; });
        mean /= static_cast<double>(m);
        double var = 0;
        for_channel(x, c, [&](S v, std::size_t) {
          double d = v - mean;
          var += d * d;
        });
        var /= static_cast<double>(m);
        const S inv = static_cast<S>(1.0 / std::sqrt(var + eps_));
        inv_std_[c] = inv;
        const S g = gamma_.value.data[c], bta = beta_.value.data[c];
        for_channel(x, c, [&](S v, std::size_t idx) {
          S xh = static_cast<S>((v - mean) * inv);
          xhat_.data[idx] = xh;
          y.data[idx] = g * xh + bta;
        });
        run_mean_.data[c] =
            static_cast<S>((1.0 - momentum_) * run_mean_.data[c] + momentum_ * mean);
        run_var_.data[c] = static_cast<S>((1.0 - momentum_) * run_var_.data[c] + momentum_ * var);
      }
    } else {
      for (std::size_t c = 0; c < c_; ++c) {
        const S inv = static_cast<S>(1.0 / std::sqrt(static_cast<double>(run_var_.data[c]) + eps_));
        inv_std_[c] = inv;
        const S mean = run_mean_.data[c];
        const S g = gamma_.value.data[c], bta = beta_.value.data[c];
        for_channel(x, c, [&](S v, std::size_t idx) { y.data[idx] = g * (v - mean) * inv + bta; });
      }
    }
    this->has_cache_ = true;
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) override {
    this->take_cache("batchnorm");
    Tensor<S> dx(dy.shape);
    const std::size_t m = n_ * hw_;
    if (!train_mode_) {
      for (std::size_t c = 0; c < c_; ++c) {
        const S k = gamma_.value.data[c] * inv_std_[c];
        for_channel(dy, c, [&](S v, std::size_t idx) { dx.data[idx] = v * k; });
      }
      return dx;
    }
    for (std::size_t c = 0; c < c_; ++c) {
      double sum_dy = 0, sum_dy_xhat = 0;
      for_channel(dy, c, [&](S v, std::size_t idx) {
        sum_dy += v;
        sum_dy_xhat += static_cast<double>(v) * xhat_.data[idx];
      });
      gamma_.grad.data[c] += static_cast<S>(sum_dy_xhat);
      beta_.grad.data[c] += static_cast<S>(sum_dy);
      const double g_inv_m = gamma_.value.data[c] * inv_std_[c] / static_cast<double>(m);
      for_channel(dy, c, [&](S v, std::size_t idx) {
        dx.data[idx] = static_cast<S>(
            g_inv_m * (static_cast<double>(m) * v - sum_dy - xhat_.data[idx] * sum_dy_xhat));
      });
    }
    return dx;
  }

  std::vector<Param<S>*> params() override { return {&gamma_, &beta_}; }
  std::vector<Tensor<S>*> buffers() override { return {&run_mean_, &run_var_}; }
  nlohmann::json spec() const override {
    return {{"kind", "batchnorm"}, {"channels", c_}, {"eps", eps_}, {"momentum", momentum_}};
  }
  const char* kind() const override { return "batchnorm"; }

 private:
  template <class F>
  void for_channel(const Tensor<S>& t, std::size_t c, F&& f) const {
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t base = (i * c_ + c) * hw_;
      for (std::size_t p = 0; p < hw_; ++p) f(t.data[base + p], base + p);
    }
  }

  std::size_t c_;
  double eps_, momentum_;
  Param<S> gamma_, beta_;
  Tensor<S> run_mean_, run_var_;
  Tensor<S> xhat_;
  std::vector<S> inv_std_;
  std::size_t n_ = 0, hw_ = 0;
  bool train_mode_ = true;
};

}  // namespace flowdet::nn
