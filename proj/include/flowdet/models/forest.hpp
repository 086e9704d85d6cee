#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "flowdet/dataset.hpp"
#include "flowdet/io/checkpoint.hpp"
#include "flowdet/rng.hpp"

namespace flowdet {

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 16;
  int feats_per_split = 0;  // 0 -> floor(sqrt(dim))
  bool bootstrap = true;
  int min_samples_split = 2;
  std::uint64_t seed = 0;
};

/// Bagged Gini-split decision trees over flattened windows; majority vote,
/// prediction ties resolve to fall (-1).
class ForestModel {
 public:
  struct Node {
    int feature = -1;        // -1 marks a leaf
    double threshold = 0;
    std::int32_t left = -1;  // feature <= threshold
    std::int32_t right = -1;
    std::int8_t label = -1;  // leaf majority, ties -> fall
  };

  static ForestModel fit(const Dataset& train, ForestConfig cfg = {}) {
    if (train.empty()) throw InsufficientDataError("forest needs a nonempty training set");
    if (cfg.n_trees < 1) throw ConfigError("forest needs n_trees >= 1");
    ForestModel m;
    m.cfg_ = cfg;
    const int feats = cfg.feats_per_split > 0
                          ? cfg.feats_per_split
                          : static_cast<int>(std::floor(std::sqrt(double(kWindowDim))));
    m.trees_.resize(static_cast<std::size_t>(cfg.n_trees));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int t = 0; t < cfg.n_trees; ++t) {
      Rng rng(derive_seed(cfg.seed, 0x74726565ULL, static_cast<std::uint64_t>(t)));
      std::vector<std::size_t> idx;
      idx.reserve(train.size());
      if (cfg.bootstrap) {
        for (std::size_t i = 0; i < train.size(); ++i) {
          idx.push_back(static_cast<std::size_t>(rng.below(train.size())));
        }
        std::sort(idx.begin(), idx.end());
      } else {
        for (std::size_t i = 0; i < train.size(); ++i) idx.push_back(i);
      }
      std::vector<Node> tree;
      build_node(train, idx, 0, feats, cfg, rng, tree);
      m.trees_[static_cast<std::size_t>(t)] = std::move(tree);
    }
    return m;
  }

  std::vector<int> predict(const std::vector<Window>& queries) const {
    std::vector<int> out(queries.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t q = 0; q < static_cast<std::ptrdiff_t>(queries.size()); ++q) {
      int vote = 0;
      for (const auto& tree : trees_) vote += predict_one(tree, queries[static_cast<std::size_t>(q)]);
      out[static_cast<std::size_t>(q)] = vote > 0 ? +1 : -1;
    }
    return out;
  }

  std::vector<int> predict(const Dataset& ds) const { return predict(ds.windows()); }

  const std::vector<std::vector<Node>>& trees() const { return trees_; }

  void save(const std::filesystem::path& path) const {
    nlohmann::json header{{"kind", "forest"}, {"scalar", "f64"}, {"n_trees", trees_.size()}};
    nlohmann::json sizes = nlohmann::json::array();
    std::vector<double> payload;
    for (const auto& tree : trees_) {
      sizes.push_back(tree.size());
      for (const auto& nd : tree) {
        payload.push_back(nd.feature);
        payload.push_back(nd.threshold);
        payload.push_back(nd.left);
        payload.push_back(nd.right);
        payload.push_back(nd.label);
      }
    }
    header["tree_sizes"] = sizes;
    io::write_checkpoint(path, std::move(header), payload);
  }

  static ForestModel load_from(const io::Checkpoint& ck) {
    ForestModel m;
    std::size_t off = 0;
    for (const auto& sz : ck.header.at("tree_sizes")) {
      std::vector<Node> tree(sz.get<std::size_t>());
      for (auto& nd : tree) {
        if (off + 5 > ck.payload.size()) throw ParseError("forest checkpoint truncated");
        nd.feature = static_cast<int>(ck.payload[off++]);
        nd.threshold = ck.payload[off++];
        nd.left = static_cast<std::int32_t>(ck.payload[off++]);
        nd.right = static_cast<std::int32_t>(ck.payload[off++]);
        nd.label = static_cast<std::int8_t>(ck.payload[off++]);
      }
      m.trees_.push_back(std::move(tree));
    }
    return m;
  }

 private:
  static int predict_one(const std::vector<Node>& tree, const Window& w) {
    std::int32_t cur = 0;
    while (tree[static_cast<std::size_t>(cur)].feature >= 0) {
      const Node& nd = tree[static_cast<std::size_t>(cur)];
      cur = w.values[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
    }
    return tree[static_cast<std::size_t>(cur)].label;
  }

  static std::int32_t build_node(const Dataset& train, std::vector<std::size_t>& idx, int depth,
                                 int feats, const ForestConfig& cfg, Rng& rng,
                                 std::vector<Node>& tree) {
    std::size_t n_flow = 0;
    for (std::size_t i : idx) n_flow += train.window(i).label > 0;
    const std::size_t n = idx.size();

    auto make_leaf = [&]() -> std::int32_t {
      Node leaf;
      leaf.label = (2 * n_flow > n) ? +1 : -1;
      tree.push_back(leaf);
      return static_cast<std::int32_t>(tree.size() - 1);
    };

    if (n_flow == 0 || n_flow == n || depth >= cfg.max_depth ||
        n < static_cast<std::size_t>(cfg.min_samples_split)) {
      return make_leaf();
    }

    // Best Gini split over a random feature subset.
    int best_feat = -1;
    double best_thr = 0, best_impurity = 1e30;
    std::vector<std::pair<double, std::int8_t>> vals(n);
    for (int f = 0; f < feats; ++f) {
      const int feat = static_cast<int>(rng.below(kWindowDim));
      for (std::size_t i = 0; i < n; ++i) {
        const Window& w = train.window(idx[i]);
        vals[i] = {w.values[static_cast<std::size_t>(feat)],
                   static_cast<std::int8_t>(w.label > 0 ? 1 : 0)};
      }
      std::sort(vals.begin(), vals.end());
      std::size_t left_n = 0, left_flow = 0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        ++left_n;
        left_flow += vals[i].second;
        if (vals[i].first == vals[i + 1].first) continue;
        const std::size_t right_n = n - left_n;
        const std::size_t right_flow = n_flow - left_flow;
        const double pl = static_cast<double>(left_flow) / left_n;
        const double pr = static_cast<double>(right_flow) / right_n;
        const double gini = left_n * 2.0 * pl * (1 - pl) + right_n * 2.0 * pr * (1 - pr);
        if (gini < best_impurity) {
          best_impurity = gini;
          best_feat = feat;
          best_thr = 0.5 * (vals[i].first + vals[i + 1].first);
        }
      }
    }
    if (best_feat < 0) return make_leaf();  // all candidate features constant

    std::vector<std::size_t> left_idx, right_idx;
    for (std::size_t i : idx) {
      if (train.window(i).values[static_cast<std::size_t>(best_feat)] <= best_thr) {
        left_idx.push_back(i);
      } else {
        right_idx.push_back(i);
      }
    }
    if (left_idx.empty() || right_idx.empty()) return make_leaf();

    Node nd;
    nd.feature = best_feat;
    nd.threshold = best_thr;
    tree.push_back(nd);
    const std::int32_t self = static_cast<std::int32_t>(tree.size() - 1);
    idx.clear();
    idx.shrink_to_fit();
    const std::int32_t left = build_node(train, left_idx, depth + 1, feats, cfg, rng, tree);
    const std::int32_t right = build_node(train, right_idx, depth + 1, feats, cfg, rng, tree);
    tree[static_cast<std::size_t>(self)].left = left;
    tree[static_cast<std::size_t>(self)].right = right;
    return self;
  }

  ForestConfig cfg_;
  std::vector<std::vector<Node>> trees_;
};

}  // namespace flowdet
