#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "json.hpp"
#include "neuronet/stages.hpp"

namespace neuronet {

using Confusion = std::array<std::array<std::size_t, kNumStages>, kNumStages>;  // [truth][pred]

struct StageMetrics {
  double acc = 0;
  double mf1 = 0;
  double kappa = 0;
  std::array<double, kNumStages> f1{};
  std::array<bool, kNumStages> absent{};  // class missing from both truth and predictions
  Confusion confusion{};
  std::size_t count = 0;

  nlohmann::json to_json() const;
};

Confusion confusion_matrix(const std::vector<int>& truth, const std::vector<int>& pred);
// Macro F1 averages over all five classes. A class absent from truth and
// predictions scores F1 = 0 and is flagged in `absent`.
StageMetrics compute_metrics(const Confusion& cm);
StageMetrics compute_metrics(const std::vector<int>& truth, const std::vector<int>& pred);

}  // namespace neuronet
