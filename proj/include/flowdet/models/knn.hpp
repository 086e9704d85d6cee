#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "flowdet/dataset.hpp"
#include "flowdet/io/checkpoint.hpp"
#include "flowdet/preprocess.hpp"

namespace flowdet {

struct KnnConfig {
  int k = 1;
};

inline constexpr int kWindowDim = kWindowLen * kNumChannels;

/// Nearest-neighbour classifier on flattened 120-dim windows, Euclidean
/// metric, distance ties broken by the lower training index.
class KnnModel {
 public:
  KnnModel() = default;

  static KnnModel fit(const Dataset& train, KnnConfig cfg = {}) {
    if (train.empty()) throw InsufficientDataError("kNN needs a nonempty training set");
    if (cfg.k < 1) throw ConfigError("kNN needs k >= 1");
    KnnModel m;
    m.cfg_ = cfg;
    m.n_ = train.size();
    m.x_.resize(m.n_ * kWindowDim);
    m.labels_.resize(m.n_);
    m.norms_.resize(m.n_);
    for (std::size_t i = 0; i < m.n_; ++i) {
      const Window& w = train.window(i);
      std::copy(w.values.begin(), w.values.end(), m.x_.begin() + i * kWindowDim);
      m.labels_[i] = w.label;
      double s = 0;
      for (double v : w.values) s += v * v;
      m.norms_[i] = s;
    }
    return m;
  }

  std::vector<int> predict(const std::vector<Window>& queries) const {
    std::vector<int> out(queries.size());
    const std::size_t block = 256;
    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Mat> X(x_.data(), static_cast<Eigen::Index>(n_), kWindowDim);
    for (std::size_t q0 = 0; q0 < queries.size(); q0 += block) {
      const std::size_t nb = std::min(block, queries.size() - q0);
      Mat Q(nb, kWindowDim);
      for (std::size_t i = 0; i < nb; ++i) {
        for (int c = 0; c < kWindowDim; ++c) Q(static_cast<Eigen::Index>(i), c) = queries[q0 + i].values[c];
      }
      Mat dot = Q * X.transpose();  // nb x n
      for (std::size_t i = 0; i < nb; ++i) {
        double qn = 0;
        for (int c = 0; c < kWindowDim; ++c) {
          qn += Q(static_cast<Eigen::Index>(i), c) * Q(static_cast<Eigen::Index>(i), c);
        }
        if (cfg_.k == 1) {
          double best = std::numeric_limits<double>::infinity();
          std::size_t best_j = 0;
          for (std::size_t j = 0; j < n_; ++j) {
            double d = qn + norms_[j] - 2.0 * dot(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (d < best) {
              best = d;
              best_j = j;
            }
          }
          out[q0 + i] = labels_[best_j];
        } else {
          out[q0 + i] = vote_k(dot, i, qn);
        }
      }
    }
    return out;
  }

  std::vector<int> predict(const Dataset& ds) const { return predict(ds.windows()); }

  std::size_t train_size() const { return n_; }
  int k() const { return cfg_.k; }

  void save(const std::filesystem::path& path) const {
    nlohmann::json header{{"kind", "knn"}, {"scalar", "f64"}, {"k", cfg_.k},
                          {"n", n_}, {"dim", kWindowDim}};
    std::vector<double> payload;
    payload.reserve(x_.size() + n_);
    payload.insert(payload.end(), x_.begin(), x_.end());
    for (int l : labels_) payload.push_back(static_cast<double>(l));
    io::write_checkpoint(path, std::move(header), payload);
  }

  static KnnModel load_from(const io::Checkpoint& ck) {
    KnnModel m;
    m.cfg_.k = ck.header.value("k", 1);
    m.n_ = ck.header.at("n").get<std::size_t>();
    if (ck.payload.size() != m.n_ * (kWindowDim + 1)) {
      throw ParseError("kNN checkpoint payload size mismatch");
    }
    m.x_.assign(ck.payload.begin(),
                ck.payload.begin() + static_cast<std::ptrdiff_t>(m.n_ * kWindowDim));
    m.labels_.resize(m.n_);
    m.norms_.resize(m.n_);
    for (std::size_t i = 0; i < m.n_; ++i) {
      m.labels_[i] = ck.payload[m.n_ * kWindowDim + i] > 0 ? +1 : -1;
      double s = 0;
      for (int c = 0; c < kWindowDim; ++c) {
        double v = m.x_[i * kWindowDim + c];
        s += v * v;
      }
      m.norms_[i] = s;
    }
    return m;
  }

 private:
  template <class Mat>
  int vote_k(const Mat& dot, std::size_t i, double qn) const {
    std::vector<std::pair<double, std::size_t>> d(n_);
    for (std::size_t j = 0; j < n_; ++j) {
      d[j] = {qn + norms_[j] - 2.0 * dot(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), j};
    }
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg_.k), n_);
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    int score = 0;
    for (std::size_t j = 0; j < k; ++j) score += labels_[d[j].second];
    return score > 0 ? +1 : -1;  // vote ties fall back to fall
  }

  KnnConfig cfg_;
  std::size_t n_ = 0;
  std::vector<double> x_;
  std::vector<double> norms_;
  std::vector<int> labels_;
};

}  // namespace flowdet
