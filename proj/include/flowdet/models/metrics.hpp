#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "flowdet/common.hpp"

namespace flowdet {

/// Accuracy plus a 2x2 confusion matrix indexed [truth][pred], 0 = fall, 1 = flow.
struct Metrics {
  double accuracy = 0;
  std::array<std::array<std::int64_t, 2>, 2> confusion{};
  std::int64_t n = 0;

  std::int64_t correct() const { return confusion[0][0] + confusion[1][1]; }

  nlohmann::json to_json() const {
    return {{"accuracy", accuracy},
            {"n", n},
            {"confusion",
             {{"fall_fall", confusion[0][0]},
              {"fall_flow", confusion[0][1]},
              {"flow_fall", confusion[1][0]},
              {"flow_flow", confusion[1][1]}}}};
  }
};

inline Metrics evaluate(const std::vector<int>& predictions, const std::vector<int>& truth) {
  if (predictions.size() != truth.size()) {
    throw ShapeError(cat("prediction/truth length mismatch: ", predictions.size(), " vs ",
                         truth.size()));
  }
  if (predictions.empty()) throw InsufficientDataError("cannot evaluate zero predictions");
  Metrics m;
  m.n = static_cast<std::int64_t>(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int t = truth[i] > 0 ? 1 : 0;
    const int p = predictions[i] > 0 ? 1 : 0;
    ++m.confusion[t][p];
  }
  m.accuracy = static_cast<double>(m.correct()) / static_cast<double>(m.n);
  return m;
}

}  // namespace flowdet
