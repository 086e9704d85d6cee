#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "flowdet/common.hpp"
#include "flowdet/preprocess.hpp"
#include "flowdet/rng.hpp"

namespace flowdet {

/// The seven train/test combinations over the two players' window sets.
enum class Regime { BB, BP1, BP2, P1P1, P1P2, P2P1, P2P2 };

inline constexpr std::array<Regime, 7> kAllRegimes = {
    Regime::BB, Regime::BP1, Regime::BP2, Regime::P1P1,
    Regime::P1P2, Regime::P2P1, Regime::P2P2};

inline std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::BB: return "B-B";
    case Regime::BP1: return "B-P1";
    case Regime::BP2: return "B-P2";
    case Regime::P1P1: return "P1-P1";
    case Regime::P1P2: return "P1-P2";
    case Regime::P2P1: return "P2-P1";
    case Regime::P2P2: return "P2-P2";
  }
  throw ConfigError("unknown regime");
}

inline Regime parse_regime(std::string_view s) {
  for (Regime r : kAllRegimes) {
    if (s == to_string(r)) return r;
  }
  throw ConfigError(cat("unknown regime '", std::string(s),
                        "'; expected one of B-B, B-P1, B-P2, P1-P1, P1-P2, P2-P1, P2-P2"));
}

enum class SplitMode { Random, Chronological };

inline std::string_view to_string(SplitMode m) {
  return m == SplitMode::Random ? "random" : "chrono";
}

inline SplitMode parse_split_mode(std::string_view s) {
  if (s == "random") return SplitMode::Random;
  if (s == "chrono" || s == "chronological") return SplitMode::Chronological;
  throw ConfigError(cat("unknown split mode '", std::string(s), "'; expected random or chrono"));
}

struct SplitSpec {
  Regime regime = Regime::BB;
  std::uint64_t seed = 0;
  SplitMode mode = SplitMode::Random;
};

/// Windows plus per-window player provenance and class counts.
class Dataset {
 public:
  Dataset() = default;

  void add(const Window& w, int player) {
    windows_.push_back(w);
    player_.push_back(player);
    (w.label > 0 ? n_flow_ : n_fall_)++;
  }

  void reserve(std::size_t n) {
    windows_.reserve(n);
    player_.reserve(n);
  }

  std::size_t size() const { return windows_.size(); }
  bool empty() const { return windows_.empty(); }
  const std::vector<Window>& windows() const { return windows_; }
  const Window& window(std::size_t i) const { return windows_[i]; }
  int player(std::size_t i) const { return player_[i]; }
  std::size_t n_flow() const { return n_flow_; }
  std::size_t n_fall() const { return n_fall_; }

  /// Replaces every label; used for permutation-null experiments.
  void set_labels(const std::vector<int>& labels) {
    if (labels.size() != windows_.size()) throw ShapeError("label count mismatch");
    n_flow_ = n_fall_ = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      windows_[i].label = labels[i];
      (labels[i] > 0 ? n_flow_ : n_fall_)++;
    }
  }

 private:
  std::vector<Window> windows_;
  std::vector<int> player_;
  std::size_t n_flow_ = 0;
  std::size_t n_fall_ = 0;
};

inline double class_balance(const Dataset& ds) {
  if (ds.empty()) throw InsufficientDataError("class balance of an empty dataset");
  return static_cast<double>(ds.n_flow()) / static_cast<double>(ds.size());
}

namespace detail {

struct Tagged {
  const Window* w;
  int player;
};

// Order for chronological splits: global time, player breaking ties.
inline void sort_chrono(std::vector<Tagged>& v) {
  std::stable_sort(v.begin(), v.end(), [](const Tagged& a, const Tagged& b) {
    if (a.w->t_end_ds != b.w->t_end_ds) return a.w->t_end_ds < b.w->t_end_ds;
    return a.player < b.player;
  });
}

/// Splits a tagged pool 90/10; test gets floor(n/10), remainder trains.
inline std::pair<std::vector<Tagged>, std::vector<Tagged>> split_90_10(
    std::vector<Tagged> pool, SplitMode mode, std::uint64_t seed) {
  const std::size_t n_test = pool.size() / 10;
  if (mode == SplitMode::Random) {
    Rng rng(seed);
    rng.shuffle(pool);
  } else {
    sort_chrono(pool);
  }
  std::vector<Tagged> test(pool.end() - static_cast<std::ptrdiff_t>(n_test), pool.end());
  pool.resize(pool.size() - n_test);
  if (mode == SplitMode::Random) {
    // keep member order time-stable for reproducible reading
    sort_chrono(pool);
    sort_chrono(test);
  }
  return {std::move(pool), std::move(test)};
}

inline Dataset to_dataset(const std::vector<Tagged>& v) {
  Dataset ds;
  ds.reserve(v.size());
  for (const auto& t : v) ds.add(*t.w, t.player);
  return ds;
}

inline std::vector<Tagged> tag(const std::vector<Window>& w, int player) {
  std::vector<Tagged> out;
  out.reserve(w.size());
  for (const auto& x : w) out.push_back({&x, player});
  return out;
}

}  // namespace detail

/// Materializes one split regime from the two players' window sets.
inline std::pair<Dataset, Dataset> make_split(const SplitSpec& spec,
                                              const std::vector<Window>& p1,
                                              const std::vector<Window>& p2) {
  if (p1.empty() || p2.empty()) throw InsufficientDataError("both players need windows");
  using detail::Tagged;
  auto t1 = detail::tag(p1, 1);
  auto t2 = detail::tag(p2, 2);

  auto concat = [](std::vector<Tagged> a, const std::vector<Tagged>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };

  std::vector<Tagged> train, test;
  switch (spec.regime) {
    case Regime::BB: {
      auto [tr, te] = detail::split_90_10(concat(t1, t2), spec.mode, spec.seed);
      train = std::move(tr);
      test = std::move(te);
      break;
    }
    case Regime::BP1: {
      auto [tr, te] = detail::split_90_10(std::move(t1), spec.mode, spec.seed);
      train = concat(std::move(tr), t2);
      test = std::move(te);
      break;
    }
    case Regime::BP2: {
      auto [tr, te] = detail::split_90_10(std::move(t2), spec.mode, spec.seed);
      train = concat(std::move(t1), tr);
      test = std::move(te);
      break;
    }
    case Regime::P1P1: {
      auto [tr, te] = detail::split_90_10(std::move(t1), spec.mode, spec.seed);
      train = std::move(tr);
      test = std::move(te);
      break;
    }
    case Regime::P2P2: {
      auto [tr, te] = detail::split_90_10(std::move(t2), spec.mode, spec.seed);
      train = std::move(tr);
      test = std::move(te);
      break;
    }
    case Regime::P1P2:
      train = std::move(t1);
      test = std::move(t2);
      break;
    case Regime::P2P1:
      train = std::move(t2);
      test = std::move(t1);
      break;
  }
  return {detail::to_dataset(train), detail::to_dataset(test)};
}

/// Mini-batch index stream: seeded shuffle each epoch, short final batch kept.
class Batcher {
 public:
  Batcher(const Dataset& ds, std::size_t batch, std::uint64_t seed)
      : ds_(&ds), batch_(batch), seed_(seed) {
    if (batch_ < 1) throw ConfigError("batch size must be >= 1");
    order_.resize(ds.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
  }

  void start_epoch(std::uint64_t epoch) {
    Rng rng(derive_seed(seed_, 0x626174636865ULL, epoch));
    rng.shuffle(order_);
    cursor_ = 0;
  }

  /// Fills `indices` with the next batch; returns false at epoch end.
  bool next(std::vector<std::size_t>& indices) {
    if (cursor_ >= order_.size()) return false;
    std::size_t n = std::min(batch_, order_.size() - cursor_);
    indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                   order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + n));
    cursor_ += n;
    return true;
  }

  std::size_t batches_per_epoch() const { return (order_.size() + batch_ - 1) / batch_; }

 private:
  const Dataset* ds_;
  std::size_t batch_;
  std::uint64_t seed_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace flowdet
