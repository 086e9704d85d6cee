#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <list>
#include <optional>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "flowdet/dataset.hpp"
#include "flowdet/io/checkpoint.hpp"
#include "flowdet/rng.hpp"

namespace flowdet {

struct SvmConfig {
  double gamma = 1.0 / 12.0;
  double C = 1000.0;
  double tol = 1e-3;            // KKT tolerance on y*f - 1
  double step_eps = 1e-6;       // minimum useful alpha progress
  std::size_t subsample_cap = 10000;
  std::uint64_t seed = 0;
  std::size_t max_updates_per_point = 400;  // iteration cap = n * this
  double cache_mb = 512.0;
};

struct SvmFitReport {
  std::size_t n_train = 0;      // points actually optimized (after cap)
  std::size_t n_sv = 0;
  std::size_t updates = 0;
  double dual_objective = 0;
  double kkt_max_violation = 0;
  double duality_gap = 0;
  bool subsampled = false;
};

namespace detail {

/// LRU cache of RBF kernel rows.
class KernelCache {
 public:
  KernelCache(const std::vector<double>& x, std::size_t n, double gamma, double budget_mb)
      : x_(x), n_(n), gamma_(gamma) {
    norms_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      double s = 0;
      for (int c = 0; c < kWindowDim; ++c) {
        double v = x_[i * kWindowDim + c];
        s += v * v;
      }
      norms_[i] = s;
    }
    max_rows_ = std::max<std::size_t>(4, static_cast<std::size_t>(budget_mb * 1e6 / (8.0 * n_)));
  }

  const std::vector<double>& row(std::size_t i) {
    auto it = slots_.find(i);
    if (it != slots_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second.lru_it);
      return it->second.values;
    }
    if (slots_.size() >= max_rows_) {
      std::size_t victim = lru_.back();
      lru_.pop_back();
      slots_.erase(victim);
    }
    Slot slot;
    slot.values.resize(n_);
    compute_row(i, slot.values);
    lru_.push_front(i);
    slot.lru_it = lru_.begin();
    return slots_.emplace(i, std::move(slot)).first->second.values;
  }

  double one(std::size_t i, std::size_t j) const {
    double dot = 0;
    const double* a = x_.data() + i * kWindowDim;
    const double* b = x_.data() + j * kWindowDim;
    for (int c = 0; c < kWindowDim; ++c) dot += a[c] * b[c];
    return std::exp(-gamma_ * (norms_[i] + norms_[j] - 2.0 * dot));
  }

 private:
  void compute_row(std::size_t i, std::vector<double>& out) const {
    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Mat> X(x_.data(), static_cast<Eigen::Index>(n_), kWindowDim);
    Eigen::Map<const Eigen::VectorXd> xi(x_.data() + i * kWindowDim, kWindowDim);
    Eigen::VectorXd dots = X * xi;
    for (std::size_t j = 0; j < n_; ++j) {
      out[j] = std::exp(-gamma_ * (norms_[i] + norms_[j] - 2.0 * dots[static_cast<Eigen::Index>(j)]));
    }
  }

  struct Slot {
    std::vector<double> values;
    std::list<std::size_t>::iterator lru_it;
  };

  const std::vector<double>& x_;
  std::size_t n_;
  double gamma_;
  std::vector<double> norms_;
  std::size_t max_rows_;
  std::unordered_map<std::size_t, Slot> slots_;
  std::list<std::size_t> lru_;
};

}  // namespace detail

/// Soft-margin RBF SVM fit by sequential pairwise optimization of the dual.
class SvmModel {
 public:
  static SvmModel fit(const Dataset& train, SvmConfig cfg = {}) {
    if (train.empty()) throw InsufficientDataError("SVM needs a nonempty training set");
    if (train.n_flow() == 0 || train.n_fall() == 0) {
      throw InsufficientDataError("SVM needs both classes in the training set");
    }
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    bool subsampled = false;
    if (cfg.subsample_cap > 0 && train.size() > cfg.subsample_cap) {
      Rng rng(derive_seed(cfg.seed, 0x73766d73ULL));
      rng.shuffle(idx);
      idx.resize(cfg.subsample_cap);
      std::sort(idx.begin(), idx.end());
      subsampled = true;
    }

    Smo smo(train, idx, cfg);
    smo.solve();

    SvmModel m;
    m.gamma_ = cfg.gamma;
    m.b_ = smo.b;
    m.report_ = smo.report(subsampled);
    for (std::size_t i = 0; i < smo.n; ++i) {
      if (smo.alpha[i] > 0.0) {
        m.sv_x_.insert(m.sv_x_.end(), smo.x.begin() + i * kWindowDim,
                       smo.x.begin() + (i + 1) * kWindowDim);
        m.sv_coef_.push_back(smo.alpha[i] * smo.y[i]);
      }
    }
    m.report_.n_sv = m.sv_coef_.size();
    return m;
  }

  std::vector<double> decision_values(const std::vector<Window>& queries) const {
    const std::size_t nsv = sv_coef_.size();
    std::vector<double> out(queries.size(), b_);
    if (nsv == 0) return out;
    std::vector<double> sv_norms(nsv);
    for (std::size_t j = 0; j < nsv; ++j) {
      double s = 0;
      for (int c = 0; c < kWindowDim; ++c) {
        double v = sv_x_[j * kWindowDim + c];
        s += v * v;
      }
      sv_norms[j] = s;
    }
    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Mat> SV(sv_x_.data(), static_cast<Eigen::Index>(nsv), kWindowDim);
    const std::size_t block = 512;
    for (std::size_t q0 = 0; q0 < queries.size(); q0 += block) {
      const std::size_t nb = std::min(block, queries.size() - q0);
      Mat Q(nb, kWindowDim);
      for (std::size_t i = 0; i < nb; ++i) {
        for (int c = 0; c < kWindowDim; ++c) Q(static_cast<Eigen::Index>(i), c) = queries[q0 + i].values[c];
      }
      Mat dots = Q * SV.transpose();
      for (std::size_t i = 0; i < nb; ++i) {
        double qn = 0;
        for (int c = 0; c < kWindowDim; ++c) {
          qn += Q(static_cast<Eigen::Index>(i), c) * Q(static_cast<Eigen::Index>(i), c);
        }
        double acc = 0;
        for (std::size_t j = 0; j < nsv; ++j) {
          acc += sv_coef_[j] *
                 std::exp(-gamma_ * (qn + sv_norms[j] -
                                     2.0 * dots(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
        }
        out[q0 + i] += acc;
      }
    }
    return out;
  }

  std::vector<int> predict(const std::vector<Window>& queries) const {
    std::vector<double> f = decision_values(queries);
    std::vector<int> out(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i] >= 0 ? +1 : -1;
    return out;
  }

  std::vector<int> predict(const Dataset& ds) const { return predict(ds.windows()); }

  const SvmFitReport& report() const { return report_; }
  double bias() const { return b_; }
  double gamma() const { return gamma_; }

  void save(const std::filesystem::path& path) const {
    nlohmann::json header{{"kind", "svm"},   {"scalar", "f64"},
                          {"gamma", gamma_}, {"b", b_},
                          {"n_sv", sv_coef_.size()}, {"dim", kWindowDim},
                          {"dual_objective", report_.dual_objective},
                          {"kkt_max_violation", report_.kkt_max_violation}};
    std::vector<double> payload;
    payload.reserve(sv_x_.size() + sv_coef_.size());
    payload.insert(payload.end(), sv_x_.begin(), sv_x_.end());
    payload.insert(payload.end(), sv_coef_.begin(), sv_coef_.end());
    io::write_checkpoint(path, std::move(header), payload);
  }

  static SvmModel load_from(const io::Checkpoint& ck) {
    SvmModel m;
    m.gamma_ = ck.header.at("gamma").get<double>();
    m.b_ = ck.header.at("b").get<double>();
    const std::size_t nsv = ck.header.at("n_sv").get<std::size_t>();
    if (ck.payload.size() != nsv * (kWindowDim + 1)) {
      throw ParseError("SVM checkpoint payload size mismatch");
    }
    m.sv_x_.assign(ck.payload.begin(),
                   ck.payload.begin() + static_cast<std::ptrdiff_t>(nsv * kWindowDim));
    m.sv_coef_.assign(ck.payload.begin() + static_cast<std::ptrdiff_t>(nsv * kWindowDim),
                      ck.payload.end());
    m.report_.n_sv = nsv;
    return m;
  }

 private:
  struct Smo {
    Smo(const Dataset& train, const std::vector<std::size_t>& idx, SvmConfig config)
        : cfg(config), n(idx.size()) {
      x.resize(n * kWindowDim);
      y.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const Window& w = train.window(idx[i]);
        std::copy(w.values.begin(), w.values.end(), x.begin() + i * kWindowDim);
        y[i] = w.label > 0 ? 1.0 : -1.0;
      }
      alpha.assign(n, 0.0);
      u.assign(n, 0.0);  // decision value sans bias
      cache.emplace(x, n, cfg.gamma, cfg.cache_mb);
      rng = Rng(derive_seed(cfg.seed, 0x736d6fULL));
    }

    double error(std::size_t i) const { return u[i] + b - y[i]; }

    bool take_step(std::size_t i1, std::size_t i2) {
      if (i1 == i2) return false;
      const double a1_old = alpha[i1], a2_old = alpha[i2];
      const double y1 = y[i1], y2 = y[i2], s = y1 * y2;
      const double e1 = error(i1), e2 = error(i2);
      double lo, hi;
      if (s < 0) {
        lo = std::max(0.0, a2_old - a1_old);
        hi = std::min(cfg.C, cfg.C + a2_old - a1_old);
      } else {
        lo = std::max(0.0, a1_old + a2_old - cfg.C);
        hi = std::min(cfg.C, a1_old + a2_old);
      }
      if (lo >= hi) return false;
      const std::vector<double>& k1 = cache->row(i1);
      const double k11 = k1[i1], k12 = k1[i2];
      const double k22 = cache->one(i2, i2);
      const double eta = k11 + k22 - 2.0 * k12;
      double a2;
      if (eta > 0) {
        a2 = a2_old + y2 * (e1 - e2) / eta;
        a2 = std::clamp(a2, lo, hi);
      } else {
        // flat direction: evaluate the dual at both clip ends
        const double f1 = y1 * e1 - a1_old * k11 - s * a2_old * k12;
        const double f2 = y2 * e2 - a2_old * k22 - s * a1_old * k12;
        const double l1 = a1_old + s * (a2_old - lo);
        const double h1 = a1_old + s * (a2_old - hi);
        const double lobj = l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22 +
                            s * lo * l1 * k12;
        const double hobj = h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22 +
                            s * hi * h1 * k12;
        if (lobj < hobj - 1e-12) {
          a2 = lo;
        } else if (lobj > hobj + 1e-12) {
          a2 = hi;
        } else {
          return false;
        }
      }
      if (std::abs(a2 - a2_old) < cfg.step_eps * (a2 + a2_old + cfg.step_eps)) return false;
      double a1 = a1_old + s * (a2_old - a2);
      if (a1 < 0) {
        a2 += s * a1;
        a1 = 0;
      } else if (a1 > cfg.C) {
        a2 += s * (a1 - cfg.C);
        a1 = cfg.C;
      }
      const std::vector<double>& k2 = cache->row(i2);

      const double d1 = y1 * (a1 - a1_old), d2 = y2 * (a2 - a2_old);
      const double b1 = y1 - (u[i1] + d1 * k11 + d2 * k12);
      const double b2 = y2 - (u[i2] + d1 * k12 + d2 * k22);
      const bool nb1 = a1 > 0 && a1 < cfg.C, nb2 = a2 > 0 && a2 < cfg.C;
      if (nb1) {
        b = b1;
      } else if (nb2) {
        b = b2;
      } else {
        b = 0.5 * (b1 + b2);
      }
      for (std::size_t i = 0; i < n; ++i) u[i] += d1 * k1[i] + d2 * k2[i];
      alpha[i1] = a1;
      alpha[i2] = a2;
      ++updates;
      return true;
    }

    bool examine(std::size_t i2) {
      const double r2 = y[i2] * error(i2);
      if (!((r2 < -cfg.tol && alpha[i2] < cfg.C) || (r2 > cfg.tol && alpha[i2] > 0))) return false;
      // 1. best |E1 - E2| over the non-bound set
      const double e2 = error(i2);
      double best_gap = -1;
      std::size_t best = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (alpha[i] > 0 && alpha[i] < cfg.C) {
          double gap = std::abs(error(i) - e2);
          if (gap > best_gap) {
            best_gap = gap;
            best = i;
          }
        }
      }
      if (best < n && take_step(best, i2)) return true;
      // 2. sweep non-bound from a random start, then everything
      const std::size_t start = static_cast<std::size_t>(rng.below(n));
      for (std::size_t k = 0; k < n; ++k) {
        std::size_t i = (start + k) % n;
        if (alpha[i] > 0 && alpha[i] < cfg.C && take_step(i, i2)) return true;
      }
      for (std::size_t k = 0; k < n; ++k) {
        std::size_t i = (start + k) % n;
        if (take_step(i, i2)) return true;
      }
      return false;
    }

    void solve() {
      const std::size_t cap = n * cfg.max_updates_per_point;
      std::size_t changed = 0;
      bool examine_all = true;
      while (changed > 0 || examine_all) {
        changed = 0;
        for (std::size_t i = 0; i < n; ++i) {
          if (examine_all || (alpha[i] > 0 && alpha[i] < cfg.C)) {
            changed += examine(i) ? 1 : 0;
            if (updates > cap) {
              throw ConvergenceError(cat("SVM did not converge within ", cap,
                                         " pair updates; duality gap = ", duality_gap()));
            }
          }
        }
        if (examine_all) {
          examine_all = false;
        } else if (changed == 0) {
          examine_all = true;
        }
      }
    }

    double dual_objective() const {
      double sum_a = 0, quad = 0;
      for (std::size_t i = 0; i < n; ++i) {
        sum_a += alpha[i];
        quad += alpha[i] * y[i] * u[i];
      }
      return sum_a - 0.5 * quad;
    }

    double duality_gap() const {
      double wnorm2 = 0, hinge = 0;
      for (std::size_t i = 0; i < n; ++i) {
        wnorm2 += alpha[i] * y[i] * u[i];
        hinge += std::max(0.0, 1.0 - y[i] * (u[i] + b));
      }
      const double primal = 0.5 * wnorm2 + cfg.C * hinge;
      return primal - dual_objective();
    }

    double kkt_max_violation() const {
      double worst = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double yf = y[i] * (u[i] + b);
        double v = 0;
        if (alpha[i] <= 0) {
          v = std::max(0.0, 1.0 - yf);
        } else if (alpha[i] >= cfg.C) {
          v = std::max(0.0, yf - 1.0);
        } else {
          v = std::abs(yf - 1.0);
        }
        worst = std::max(worst, v);
      }
      return worst;
    }

    double alpha_y_sum() const {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += alpha[i] * y[i];
      return s;
    }

    SvmFitReport report(bool subsampled) const {
      SvmFitReport r;
      r.n_train = n;
      r.updates = updates;
      r.dual_objective = dual_objective();
      r.kkt_max_violation = kkt_max_violation();
      r.duality_gap = duality_gap();
      r.subsampled = subsampled;
      return r;
    }

    SvmConfig cfg;
    std::size_t n;
    std::vector<double> x, y, alpha, u;
    double b = 0;
    std::size_t updates = 0;
    std::optional<detail::KernelCache> cache;
    Rng rng;
  };

  double gamma_ = 1.0 / 12.0;
  double b_ = 0;
  std::vector<double> sv_x_;
  std::vector<double> sv_coef_;  // alpha_i * y_i
  SvmFitReport report_;
};

}  // namespace flowdet
